#pragma once

// Observed data: N units by T*M responses with a missingness mask and
// optional unit weights.

#include <Eigen/Dense>
#include <vector>

#include "gmtmm/design.hpp"

namespace gmtmm {

struct Dataset {
  Eigen::MatrixXd y;                  // N x J; category codes are 0-based
  std::vector<std::uint8_t> mask;     // N*J, row-major; 1 = observed
  Eigen::VectorXd weights;            // N, positive

  int n_units() const { return int(y.rows()); }
  int n_vars() const { return int(y.cols()); }
  bool observed(int i, int j) const { return mask[size_t(i) * y.cols() + j] != 0; }
  void set_observed(int i, int j, bool v) { mask[size_t(i) * y.cols() + j] = v ? 1 : 0; }

  static Dataset empty(int n, int j) {
    Dataset d;
    d.y = Eigen::MatrixXd::Zero(n, j);
    d.mask.assign(size_t(n) * j, 1);
    d.weights = Eigen::VectorXd::Ones(n);
    return d;
  }

  void validate(const MtmmDesign& design) const {
    if (n_vars() != design.n_variables()) throw DataError("dataset column count does not match design");
    if (weights.size() != n_units()) throw DataError("weight vector length mismatch");
    if (mask.size() != size_t(n_units()) * n_vars()) throw DataError("mask size mismatch");
    for (int i = 0; i < n_units(); ++i) {
      if (!(weights[i] > 0.0)) throw DataError("unit weight must be positive (unit " + std::to_string(i) + ")");
      bool any = false;
      for (int j = 0; j < n_vars(); ++j) {
        if (!observed(i, j)) continue;
        any = true;
        const VariableSpec& v = design.variables[j];
        const double val = y(i, j);
        if (!std::isfinite(val)) throw DataError("nonfinite observed value at unit " + std::to_string(i));
        if (family_is_discrete(v.family)) {
          if (val != std::floor(val) || val < 0 || val >= v.n_categories)
            throw DataError("category code out of range at unit " + std::to_string(i) +
                            ", variable " + std::to_string(j));
        } else if (v.family == Family::censored_gaussian && val < v.censor_bound) {
          throw DataError("censored observation below the bound at unit " + std::to_string(i));
        }
      }
      if (!any) throw DataError("unit " + std::to_string(i) + " has no observed entries");
    }
  }
};

}  // namespace gmtmm
