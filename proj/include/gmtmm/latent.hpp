#pragma once

// Latent cell enumeration and the log-linear latent prior.
//
// A cell is (trait categories, method categories, mixture component) with
// index c = (a*B + b)*S + s, where a indexes the joint trait configuration
// and b the joint method configuration.

#include <Eigen/Dense>
#include <vector>

#include "gmtmm/design.hpp"
#include "gmtmm/parameters.hpp"

namespace gmtmm {

class CellStructure {
 public:
  explicit CellStructure(const MtmmDesign& design) : design_(&design) {
    design.check_basic();
    const int T = design.n_traits, M = design.n_methods;
    A_ = design.n_trait_cells();
    B_ = design.n_method_cells();
    S_ = design.n_components;
    n_cells_ = A_ * B_ * S_;
    trait_cats_.resize(A_ * T);
    for (std::int64_t a = 0; a < A_; ++a) {
      std::int64_t rest = a;
      for (int t = T - 1; t >= 0; --t) {
        trait_cats_[a * T + t] = int(rest % design.trait_cardinality[t]);
        rest /= design.trait_cardinality[t];
      }
    }
    method_cats_.resize(B_ * M);
    for (std::int64_t b = 0; b < B_; ++b) {
      std::int64_t rest = b;
      for (int m = M - 1; m >= 0; --m) {
        method_cats_[b * M + m] = int(rest % design.method_cardinality[m]);
        rest /= design.method_cardinality[m];
      }
    }
    // per-variable cell -> (trait cat, method cat, component) combo index
    combo_count_.resize(design.n_variables());
    cell_combo_.resize(design.n_variables());
    for (int j = 0; j < design.n_variables(); ++j) {
      const int t = design.var_trait(j), m = design.var_method(j);
      const int K = design.trait_cardinality[t], L = design.method_cardinality[m];
      combo_count_[j] = K * L * S_;
      auto& map = cell_combo_[j];
      map.resize(n_cells_);
      for (std::int64_t c = 0; c < n_cells_; ++c) {
        const int s = int(c % S_);
        const std::int64_t b = (c / S_) % B_;
        const std::int64_t a = c / (S_ * B_);
        const int k = trait_cats_[a * T + t], l = method_cats_[b * M + m];
        map[c] = (k * L + l) * S_ + s;
      }
    }
  }

  const MtmmDesign& design() const { return *design_; }
  std::int64_t n_cells() const { return n_cells_; }
  std::int64_t n_trait_cells() const { return A_; }
  std::int64_t n_method_cells() const { return B_; }
  int n_components() const { return S_; }

  int trait_cat(std::int64_t a, int t) const { return trait_cats_[a * design_->n_traits + t]; }
  int method_cat(std::int64_t b, int m) const { return method_cats_[b * design_->n_methods + m]; }

  int component_of(std::int64_t c) const { return int(c % S_); }
  std::int64_t method_cell_of(std::int64_t c) const { return (c / S_) % B_; }
  std::int64_t trait_cell_of(std::int64_t c) const { return c / (S_ * B_); }

  int combo_count(int j) const { return combo_count_[j]; }
  const std::vector<std::int32_t>& cell_combos(int j) const { return cell_combo_[j]; }

  // Decompose a per-variable combo index back into (k, l, s).
  void combo_parts(int j, int q, int& k, int& l, int& s) const {
    const int m = design_->var_method(j);
    const int L = design_->method_cardinality[m];
    s = q % S_;
    l = (q / S_) % L;
    k = q / (S_ * L);
  }

  LatentCell cell(std::int64_t c) const {
    const int T = design_->n_traits, M = design_->n_methods;
    LatentCell out;
    out.component = component_of(c);
    const std::int64_t a = trait_cell_of(c), b = method_cell_of(c);
    out.trait_category.resize(T);
    out.trait_scores.resize(T);
    for (int t = 0; t < T; ++t) {
      out.trait_category[t] = trait_cat(a, t);
      out.trait_scores[t] = design_->trait_score(t, out.trait_category[t]);
    }
    out.method_category.resize(M);
    out.method_scores.resize(M);
    for (int m = 0; m < M; ++m) {
      out.method_category[m] = method_cat(b, m);
      out.method_scores[m] = design_->method_score(m, out.method_category[m]);
    }
    return out;
  }

 private:
  const MtmmDesign* design_;
  std::int64_t A_ = 0, B_ = 0, n_cells_ = 0;
  int S_ = 1;
  std::vector<int> trait_cats_, method_cats_;
  std::vector<int> combo_count_;
  std::vector<std::vector<std::int32_t>> cell_combo_;
};

// Evaluated latent prior: log tables plus the prior moments the score needs.
struct LatentTables {
  VectorXd log_trait;                 // over joint trait cells
  std::vector<VectorXd> log_method;   // per method, over its categories
  VectorXd log_mix;                   // over components
  VectorXd log_cell;                  // combined, over all cells
  std::vector<VectorXd> trait_marginal;  // P(eta_t = k)
  MatrixXd uu_expect;                 // E[u_t u_{t'}] under the trait prior
  VectorXd mix_prob;
};

inline LatentTables compute_latent_tables(const ParameterSet& params, const CellStructure& cs) {
  const MtmmDesign& d = cs.design();
  const ParameterLayout& L = params.layout();
  const VectorXd& v = params.values();
  const int T = d.n_traits, M = d.n_methods, S = d.n_components;
  LatentTables out;

  const std::int64_t A = cs.n_trait_cells();
  out.log_trait.resize(A);
  for (std::int64_t a = 0; a < A; ++a) {
    double mu = 0.0;
    for (int t = 0; t < T; ++t) {
      const int k = cs.trait_cat(a, t);
      if (k + 1 < d.trait_cardinality[t]) {
        const int p = L.alpha_index(t, k);
        mu += v[p];
      }
    }
    for (int t = 0; t < T; ++t)
      for (int tp = t + 1; tp < T; ++tp) {
        const int p = L.phi_index(t, tp);
        if (p >= 0)
          mu += v[p] * d.trait_score(t, cs.trait_cat(a, t)) * d.trait_score(tp, cs.trait_cat(a, tp));
      }
    out.log_trait[a] = mu;
  }
  out.log_trait.array() -= log_sum_exp({out.log_trait.data(), size_t(A)});

  out.log_method.resize(M);
  for (int m = 0; m < M; ++m) {
    const int Lm = d.method_cardinality[m];
    VectorXd lm(Lm);
    for (int l = 0; l < Lm; ++l) lm[l] = (l + 1 < Lm) ? v[L.kappa_index(m, l)] : 0.0;
    lm.array() -= log_sum_exp({lm.data(), size_t(Lm)});
    out.log_method[m] = lm;
  }

  out.log_mix.resize(S);
  for (int s = 0; s < S; ++s) out.log_mix[s] = (s + 1 < S) ? v[L.rho_index(s)] : 0.0;
  out.log_mix.array() -= log_sum_exp({out.log_mix.data(), size_t(S)});
  out.mix_prob = out.log_mix.array().exp();

  out.log_cell.resize(cs.n_cells());
  const std::int64_t B = cs.n_method_cells();
  VectorXd log_method_joint = VectorXd::Zero(B);
  for (std::int64_t b = 0; b < B; ++b)
    for (int m = 0; m < M; ++m) log_method_joint[b] += out.log_method[m][cs.method_cat(b, m)];
  for (std::int64_t c = 0; c < cs.n_cells(); ++c)
    out.log_cell[c] = out.log_trait[cs.trait_cell_of(c)] +
                      log_method_joint[cs.method_cell_of(c)] + out.log_mix[cs.component_of(c)];

  out.trait_marginal.resize(T);
  for (int t = 0; t < T; ++t) out.trait_marginal[t] = VectorXd::Zero(d.trait_cardinality[t]);
  out.uu_expect = MatrixXd::Zero(T, T);
  for (std::int64_t a = 0; a < A; ++a) {
    const double pa = std::exp(out.log_trait[a]);
    for (int t = 0; t < T; ++t) {
      const int k = cs.trait_cat(a, t);
      out.trait_marginal[t][k] += pa;
      const double ut = d.trait_score(t, k);
      for (int tp = t; tp < T; ++tp) {
        const double utp = d.trait_score(tp, cs.trait_cat(a, tp));
        out.uu_expect(t, tp) += pa * ut * utp;
      }
    }
  }
  out.uu_expect = out.uu_expect.selfadjointView<Eigen::Upper>();
  return out;
}

// Probability table over the enumerated latent cells (sums to one).
inline VectorXd latent_prior(const ParameterSet& params, const MtmmDesign& design) {
  CellStructure cs(design);
  return compute_latent_tables(params, cs).log_cell.array().exp();
}

}  // namespace gmtmm
