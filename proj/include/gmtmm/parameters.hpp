#pragma once

// Natural-parameter container for the discrete-latent model, with the
// constraint machinery (fix/equate) and the unconstrained reparameterization
// used by the optimizers: log scale for error SDs, first threshold plus
// log-increments for cumulative-probit cutpoints, identity elsewhere.
//
// Structural reference entries (first response category of a multinomial
// variable, last category of each latent log-linear block, last mixture
// component) are not stored: the natural vector holds exactly the
// estimable parameters, so the free count follows by excluding fixed and
// equated duplicates.

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gmtmm/design.hpp"
#include "gmtmm/math.hpp"

namespace gmtmm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kSigmaFloor = 1e-8;
inline constexpr double kLatentCoefCap = 40.0;

namespace detail {
struct RefKey {
  int kind, t, m, cat, s;
  friend auto operator<=>(const RefKey&, const RefKey&) = default;
};
inline RefKey key(const ParamRef& r) {
  return {int(r.kind), r.t, r.m, r.cat, r.s};
}
}  // namespace detail

struct ParamInfo {
  ParamRef ref;
  std::string name;
  int free_index = -1;     // -1: fixed
  double fixed_value = 0.0;
};

class ParameterLayout {
 public:
  explicit ParameterLayout(const MtmmDesign& design) : design_(design) {
    design.check_basic();
    build();
    apply_constraints();
  }

  const MtmmDesign& design() const { return design_; }
  int size() const { return int(params_.size()); }
  int n_free() const { return n_free_; }
  const ParamInfo& info(int p) const { return params_[p]; }
  const std::string& name(int p) const { return params_[p].name; }

  int index_of(const ParamRef& r) const {
    auto it = index_.find(detail::key(r));
    return it == index_.end() ? -1 : it->second;
  }
  int index_of_name(const std::string& n) const {
    auto it = name_index_.find(n);
    return it == name_index_.end() ? -1 : it->second;
  }

  // First natural index of the measurement block of variable j, component s.
  int block_start(int j, int s) const { return block_start_[s * design_.n_variables() + j]; }
  int block_size(int j) const { return design_.measurement_param_count(j); }

  int alpha_index(int t, int k) const { return alpha_start_[t] < 0 ? -1 : alpha_start_[t] + k; }
  int n_alpha(int t) const { return design_.trait_cardinality[t] - 1; }
  int kappa_index(int m, int l) const { return kappa_start_[m] < 0 ? -1 : kappa_start_[m] + l; }
  int n_kappa(int m) const { return design_.method_cardinality[m] - 1; }
  int phi_index(int t, int tp) const {
    auto it = phi_index_.find({t, tp});
    return it == phi_index_.end() ? -1 : it->second;
  }
  int rho_index(int s) const { return rho_start_ < 0 ? -1 : rho_start_ + s; }
  int n_rho() const { return design_.n_components - 1; }

  bool is_fixed(int p) const { return params_[p].free_index < 0; }
  int free_index(int p) const { return params_[p].free_index; }

  // Members of each free equivalence class, in natural-index order.
  const std::vector<std::vector<int>>& free_members() const { return free_members_; }

  VectorXd default_values() const {
    VectorXd v = VectorXd::Zero(size());
    for (int p = 0; p < size(); ++p) {
      const auto& pi = params_[p];
      if (pi.ref.kind == ParamKind::error_sd) v[p] = 1.0;
      if (pi.ref.kind == ParamKind::threshold) v[p] = pi.ref.cat - 0.5 * design_.variables[design_.var_index(pi.ref.t, pi.ref.m)].n_categories;
      if (pi.free_index < 0) v[p] = pi.fixed_value;
    }
    return v;
  }

  // --- natural <-> unconstrained free vector -----------------------------

  VectorXd to_free(const VectorXd& natural) const {
    VectorXd u(n_free_);
    for (int f = 0; f < n_free_; ++f) {
      const int p = free_members_[f].front();
      u[f] = natural_to_coord(p, natural);
    }
    return u;
  }

  VectorXd to_natural(const VectorXd& free) const {
    VectorXd nat(size());
    for (int p = 0; p < size(); ++p)
      if (params_[p].free_index < 0) nat[p] = params_[p].fixed_value;
    // thresholds must be reconstructed block-wise in order
    for (int p = 0; p < size(); ++p) {
      const auto& pi = params_[p];
      if (pi.free_index < 0) continue;
      const double u = free[pi.free_index];
      switch (pi.ref.kind) {
        case ParamKind::error_sd: nat[p] = std::exp(u) + kSigmaFloor; break;
        case ParamKind::threshold:
          nat[p] = (pi.ref.cat == 1) ? u : nat[p - 1] + std::exp(u);
          break;
        default: nat[p] = u;
      }
    }
    return nat;
  }

  // g_free = (d natural / d free)' * g_natural, evaluated at `natural`.
  VectorXd chain_to_free(const VectorXd& g_natural, const VectorXd& natural) const {
    VectorXd g = VectorXd::Zero(n_free_);
    for (int p = 0; p < size(); ++p) {
      const auto& pi = params_[p];
      if (pi.free_index < 0) continue;
      switch (pi.ref.kind) {
        case ParamKind::error_sd:
          g[pi.free_index] += g_natural[p] * (natural[p] - kSigmaFloor);
          break;
        case ParamKind::threshold: {
          // theta_i = u_1 + sum_{l<=i} exp(u_l): the increment coordinate of
          // this threshold also moves every later threshold in the block.
          double acc = 0.0;
          const int nthr = design_.variables[design_.var_index(pi.ref.t, pi.ref.m)].n_categories - 1;
          for (int q = p; q < size() && params_[q].ref.kind == ParamKind::threshold &&
                          params_[q].ref.t == pi.ref.t && params_[q].ref.m == pi.ref.m &&
                          params_[q].ref.s == pi.ref.s && params_[q].ref.cat >= pi.ref.cat &&
                          params_[q].ref.cat <= nthr;
               ++q)
            acc += g_natural[q];
          g[pi.free_index] += acc * (pi.ref.cat == 1 ? 1.0 : natural[p] - natural[p - 1]);
          break;
        }
        default: g[pi.free_index] += g_natural[p];
      }
    }
    return g;
  }

  // J(p, f) = d natural_p / d free_f at `natural`; used for delta-method SEs.
  MatrixXd natural_jacobian(const VectorXd& natural) const {
    MatrixXd J = MatrixXd::Zero(size(), n_free_);
    for (int p = 0; p < size(); ++p) {
      const auto& pi = params_[p];
      if (pi.free_index < 0) continue;
      switch (pi.ref.kind) {
        case ParamKind::error_sd: J(p, pi.free_index) = natural[p] - kSigmaFloor; break;
        case ParamKind::threshold: {
          // theta_i depends on the coordinates of thresholds 1..i.
          for (int q = p; q >= 0 && params_[q].ref.kind == ParamKind::threshold &&
                          params_[q].ref.t == pi.ref.t && params_[q].ref.m == pi.ref.m &&
                          params_[q].ref.s == pi.ref.s;
               --q) {
            const auto& qi = params_[q];
            if (qi.ref.cat > pi.ref.cat) continue;
            J(p, qi.free_index) = (qi.ref.cat == 1) ? 1.0 : natural[q] - natural[q - 1];
          }
          break;
        }
        default: J(p, pi.free_index) = 1.0;
      }
    }
    return J;
  }

 private:
  double natural_to_coord(int p, const VectorXd& natural) const {
    const auto& pi = params_[p];
    switch (pi.ref.kind) {
      case ParamKind::error_sd:
        return std::log(std::max(natural[p] - kSigmaFloor, 1e-300));
      case ParamKind::threshold:
        return pi.ref.cat == 1 ? natural[p]
                               : std::log(std::max(natural[p] - natural[p - 1], 1e-300));
      default: return natural[p];
    }
  }

  void add(ParamRef r, std::string name) {
    index_[detail::key(r)] = int(params_.size());
    name_index_[name] = int(params_.size());
    params_.push_back({r, std::move(name), -1, 0.0});
  }

  std::string sfx(int s) const {
    return design_.n_components > 1 ? ",s" + std::to_string(s + 1) : "";
  }

  void build() {
    const int T = design_.n_traits, M = design_.n_methods, S = design_.n_components;
    block_start_.assign(S * design_.n_variables(), -1);
    for (int s = 0; s < S; ++s) {
      for (int j = 0; j < design_.n_variables(); ++j) {
        const int t = design_.var_trait(j), m = design_.var_method(j);
        const VariableSpec& v = design_.variables[j];
        block_start_[s * design_.n_variables() + j] = int(params_.size());
        const std::string tm = std::to_string(t + 1) + "," + std::to_string(m + 1);
        const bool has_u = design_.trait_cardinality[t] > 1;
        const bool has_v = design_.method_cardinality[m] > 1;
        switch (v.family) {
          case Family::gaussian:
          case Family::censored_gaussian:
            add({ParamKind::intercept, t, m, 0, s}, "tau[" + tm + sfx(s) + "]");
            add({ParamKind::trait_loading, t, m, 0, s}, "lambda[" + tm + sfx(s) + "]");
            add({ParamKind::method_loading, t, m, 0, s}, "gamma[" + tm + sfx(s) + "]");
            add({ParamKind::error_sd, t, m, 0, s}, "sigma[" + tm + sfx(s) + "]");
            if (!has_u) constraints_auto_.fix({ParamKind::trait_loading, t, m, 0, s}, 0.0);
            if (!has_v) constraints_auto_.fix({ParamKind::method_loading, t, m, 0, s}, 0.0);
            break;
          case Family::multinomial:
            for (int k = 1; k < v.n_categories; ++k) {
              const std::string ck = tm + ",c" + std::to_string(k + 1);
              add({ParamKind::intercept, t, m, k, s}, "tau[" + ck + sfx(s) + "]");
              add({ParamKind::trait_loading, t, m, k, s}, "lambda[" + ck + sfx(s) + "]");
              add({ParamKind::method_loading, t, m, k, s}, "gamma[" + ck + sfx(s) + "]");
              if (!has_u) constraints_auto_.fix({ParamKind::trait_loading, t, m, k, s}, 0.0);
              if (!has_v) constraints_auto_.fix({ParamKind::method_loading, t, m, k, s}, 0.0);
            }
            break;
          case Family::cumulative_probit:
            for (int k = 1; k < v.n_categories; ++k)
              add({ParamKind::threshold, t, m, k, s},
                  "thr[" + tm + "," + std::to_string(k) + sfx(s) + "]");
            add({ParamKind::trait_loading, t, m, 0, s}, "lambda[" + tm + sfx(s) + "]");
            add({ParamKind::method_loading, t, m, 0, s}, "gamma[" + tm + sfx(s) + "]");
            if (!has_u) constraints_auto_.fix({ParamKind::trait_loading, t, m, 0, s}, 0.0);
            if (!has_v) constraints_auto_.fix({ParamKind::method_loading, t, m, 0, s}, 0.0);
            break;
        }
      }
    }
    alpha_start_.assign(T, -1);
    for (int t = 0; t < T; ++t) {
      if (design_.trait_cardinality[t] < 2) continue;
      alpha_start_[t] = int(params_.size());
      for (int k = 0; k + 1 < design_.trait_cardinality[t]; ++k)
        add({ParamKind::latent_trait, t, 0, k, 0},
            "alpha[" + std::to_string(t + 1) + "," + std::to_string(k + 1) + "]");
    }
    kappa_start_.assign(M, -1);
    for (int m = 0; m < M; ++m) {
      if (design_.method_cardinality[m] < 2) continue;
      kappa_start_[m] = int(params_.size());
      for (int l = 0; l + 1 < design_.method_cardinality[m]; ++l)
        add({ParamKind::latent_method, 0, m, l, 0},
            "kappa[" + std::to_string(m + 1) + "," + std::to_string(l + 1) + "]");
    }
    for (int t = 0; t < T; ++t)
      for (int tp = t + 1; tp < T; ++tp) {
        if (design_.trait_cardinality[t] < 2 || design_.trait_cardinality[tp] < 2) continue;
        phi_index_[{t, tp}] = int(params_.size());
        add({ParamKind::trait_assoc, t, tp, 0, 0},
            "phi[" + std::to_string(t + 1) + "," + std::to_string(tp + 1) + "]");
      }
    rho_start_ = design_.n_components > 1 ? int(params_.size()) : -1;
    for (int s = 0; s + 1 < design_.n_components; ++s)
      add({ParamKind::mixture_logit, 0, 0, 0, s}, "mix[s" + std::to_string(s + 1) + "]");
  }

  void apply_constraints() {
    auto resolve = [&](const ParamRef& r) {
      int p = index_of(r);
      if (p < 0) throw ConfigError("constraint refers to a parameter absent from this design");
      return p;
    };
    // union-find over natural indices
    std::vector<int> parent(size());
    for (int p = 0; p < size(); ++p) parent[p] = p;
    auto find = [&](int x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const auto& eq : design_.constraints.equalities) {
      if (eq.members.size() < 2) throw ConfigError("equality constraint needs >= 2 members");
      const int p0 = resolve(eq.members[0]);
      if (params_[p0].ref.kind == ParamKind::threshold)
        throw ConfigError("equality constraints on thresholds are not supported");
      for (size_t i = 1; i < eq.members.size(); ++i) {
        const int pi = resolve(eq.members[i]);
        if (params_[pi].ref.kind != params_[p0].ref.kind)
          throw ConfigError("equality constraint mixes parameter kinds");
        parent[find(pi)] = find(p0);
      }
    }
    std::vector<double> fixed_value(size(), 0.0);
    std::vector<char> fixed(size(), 0);
    auto apply_fix = [&](const FixConstraint& fc) {
      const int p = resolve(fc.ref);
      const int r = find(p);
      if (fixed[r] && fixed_value[r] != fc.value)
        throw ConfigError("conflicting fixed values for " + params_[p].name);
      if (params_[p].ref.kind == ParamKind::error_sd && fc.value <= 0.0)
        throw ConfigError("error scale fixed to a nonpositive value: " + params_[p].name);
      fixed[r] = 1;
      fixed_value[r] = fc.value;
    };
    for (const auto& fc : constraints_auto_.fixed) apply_fix(fc);
    for (const auto& fc : design_.constraints.fixed) apply_fix(fc);

    std::map<int, int> class_free;
    n_free_ = 0;
    free_members_.clear();
    for (int p = 0; p < size(); ++p) {
      const int r = find(p);
      if (fixed[r]) {
        params_[p].free_index = -1;
        params_[p].fixed_value = fixed_value[r];
        continue;
      }
      auto it = class_free.find(r);
      if (it == class_free.end()) {
        it = class_free.emplace(r, n_free_++).first;
        free_members_.emplace_back();
      }
      params_[p].free_index = it->second;
      free_members_[it->second].push_back(p);
    }
  }

  MtmmDesign design_;
  std::vector<ParamInfo> params_;
  std::map<detail::RefKey, int> index_;
  std::map<std::string, int> name_index_;
  std::vector<int> block_start_;
  std::vector<int> alpha_start_, kappa_start_;
  std::map<std::pair<int, int>, int> phi_index_;
  int rho_start_ = -1;
  int n_free_ = 0;
  std::vector<std::vector<int>> free_members_;
  ConstraintSet constraints_auto_;
};

class ParameterSet {
 public:
  explicit ParameterSet(std::shared_ptr<const ParameterLayout> layout)
      : layout_(std::move(layout)), values_(layout_->default_values()) {}
  ParameterSet(std::shared_ptr<const ParameterLayout> layout, VectorXd values)
      : layout_(std::move(layout)), values_(std::move(values)) {
    if (values_.size() != layout_->size()) throw ConfigError("parameter vector size mismatch");
  }

  const ParameterLayout& layout() const { return *layout_; }
  std::shared_ptr<const ParameterLayout> layout_ptr() const { return layout_; }
  const VectorXd& values() const { return values_; }
  VectorXd& values() { return values_; }

  double get(const ParamRef& r) const {
    const int p = layout_->index_of(r);
    if (p < 0) throw ConfigError("unknown parameter reference");
    return values_[p];
  }
  void set(const ParamRef& r, double v) {
    const int p = layout_->index_of(r);
    if (p < 0) throw ConfigError("unknown parameter reference");
    values_[p] = v;
  }
  void set_by_name(const std::string& name, double v) {
    const int p = layout_->index_of_name(name);
    if (p < 0) throw ConfigError("unknown parameter name: " + name);
    values_[p] = v;
  }
  double get_by_name(const std::string& name) const {
    const int p = layout_->index_of_name(name);
    if (p < 0) throw ConfigError("unknown parameter name: " + name);
    return values_[p];
  }

  int n_free() const { return layout_->n_free(); }
  VectorXd free_vector() const { return layout_->to_free(values_); }
  void set_free(const VectorXd& u) { values_ = layout_->to_natural(u); }

  // Re-imposes fixed values and equality sharing (representative = first member).
  void enforce_constraints() {
    const auto& L = *layout_;
    for (int p = 0; p < L.size(); ++p)
      if (L.is_fixed(p)) values_[p] = L.info(p).fixed_value;
    for (const auto& members : L.free_members())
      for (size_t i = 1; i < members.size(); ++i) values_[members[i]] = values_[members.front()];
  }

 private:
  std::shared_ptr<const ParameterLayout> layout_;
  VectorXd values_;
};

// Report-style structural validation of a parameter set against its design.
inline ValidationReport validate_design(const MtmmDesign& design, const ParameterSet& params) {
  ValidationReport rep;
  const ParameterLayout& L = params.layout();
  if (&L.design() != &design) {
    // compare shape rather than identity
    if (L.design().n_traits != design.n_traits || L.design().n_methods != design.n_methods ||
        L.design().n_components != design.n_components)
      rep.add("shape-mismatch", "parameter layout does not match the design grid");
  }
  const VectorXd& v = params.values();
  for (int p = 0; p < L.size(); ++p) {
    const ParamInfo& pi = L.info(p);
    if (!std::isfinite(v[p])) rep.add("nonfinite", "nonfinite value for " + pi.name);
    if (pi.ref.kind == ParamKind::error_sd && v[p] <= 0.0)
      rep.add("nonpositive-scale", "nonpositive error scale " + pi.name);
    if (pi.ref.kind == ParamKind::threshold && pi.ref.cat > 1 && v[p] <= v[p - 1])
      rep.add("threshold-order", "thresholds not strictly increasing at " + pi.name);
    if (L.is_fixed(p) && std::abs(v[p] - pi.fixed_value) > 0.0)
      rep.add("fixed-violated", pi.name + " deviates from its fixed value");
  }
  for (const auto& members : L.free_members())
    for (size_t i = 1; i < members.size(); ++i)
      if (v[members[i]] != v[members.front()])
        rep.add("equality-violated",
                L.name(members[i]) + " deviates from its equality class");
  return rep;
}

}  // namespace gmtmm
