#pragma once

// MTMM measurement design: the trait x method grid, per-variable response
// family, latent cardinalities, mixture size, and the constraint list.

#include <cstdint>
#include <string>
#include <vector>

#include "gmtmm/math.hpp"

namespace gmtmm {

enum class Family : std::uint8_t {
  gaussian,
  censored_gaussian,
  multinomial,
  cumulative_probit,
};

inline bool family_is_discrete(Family f) {
  return f == Family::multinomial || f == Family::cumulative_probit;
}
inline bool family_has_scale(Family f) {
  return f == Family::gaussian || f == Family::censored_gaussian;
}

inline const char* family_name(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::censored_gaussian: return "censored_gaussian";
    case Family::multinomial: return "multinomial";
    case Family::cumulative_probit: return "cumulative_probit";
  }
  return "?";
}

struct VariableSpec {
  Family family = Family::gaussian;
  int n_categories = 0;       // discrete families only
  double censor_bound = 0.0;  // censored_gaussian only
  std::string name;           // optional label used in reports
};

// Kinds of natural parameters. Reference-category entries (first response
// category, last latent category, last mixture component) are structural
// zeros and are not represented.
enum class ParamKind : std::uint8_t {
  intercept,       // tau_{tm,s}; per non-reference category for multinomial
  threshold,       // cumulative-probit cutpoints, strictly increasing per variable
  trait_loading,   // lambda_{tm,s}
  method_loading,  // gamma_{tm,s}
  error_sd,        // sigma_{eps,tm,s} > 0
  latent_trait,    // alpha_{t,k}, k < K_t - 1
  latent_method,   // kappa_{m,l}, l < L_m - 1
  trait_assoc,     // phi_{tt'}, t < t'
  mixture_logit,   // rho_s, s < S - 1
};

// Address of one natural parameter. Index semantics depend on kind:
//   measurement kinds: (t, m, cat, s); cat is the response category for
//     multinomial (1-based internal index; 0 is the reference) or the
//     threshold number for cumulative_probit, else 0.
//   latent_trait: (t, cat=k); latent_method: (m=t-slot, cat=l);
//   trait_assoc: (t, m=t'); mixture_logit: (s).
struct ParamRef {
  ParamKind kind;
  int t = 0, m = 0, cat = 0, s = 0;
  friend bool operator==(const ParamRef&, const ParamRef&) = default;
};

struct FixConstraint {
  ParamRef ref;
  double value = 0.0;
};
struct EquateConstraint {
  std::vector<ParamRef> members;  // all members share one free parameter
};

struct ConstraintSet {
  std::vector<FixConstraint> fixed;
  std::vector<EquateConstraint> equalities;

  void fix(ParamRef r, double v) { fixed.push_back({r, v}); }
  void equate(std::vector<ParamRef> refs) { equalities.push_back({std::move(refs)}); }
};

// Scores of an ordered discrete latent variable: equally spaced on [0, 1].
inline double latent_score(int category, int n_categories) {
  return n_categories <= 1 ? 0.0 : double(category) / double(n_categories - 1);
}

struct MtmmDesign {
  int n_traits = 0;
  int n_methods = 0;
  std::vector<VariableSpec> variables;  // size T*M, index j = t*M + m
  std::vector<int> trait_cardinality;   // K_t >= 1
  std::vector<int> method_cardinality;  // L_m >= 1
  int n_components = 1;                 // |S| >= 1; 1 = homogeneous error process
  ConstraintSet constraints;
  std::vector<std::string> trait_names;   // optional
  std::vector<std::string> method_names;  // optional

  int n_variables() const { return n_traits * n_methods; }
  int var_index(int t, int m) const { return t * n_methods + m; }
  int var_trait(int j) const { return j / n_methods; }
  int var_method(int j) const { return j % n_methods; }

  std::int64_t n_trait_cells() const {
    std::int64_t n = 1;
    for (int k : trait_cardinality) n *= k;
    return n;
  }
  std::int64_t n_method_cells() const {
    std::int64_t n = 1;
    for (int l : method_cardinality) n *= l;
    return n;
  }
  std::int64_t n_cells() const { return n_trait_cells() * n_method_cells() * n_components; }

  double trait_score(int t, int k) const { return latent_score(k, trait_cardinality[t]); }
  double method_score(int m, int l) const { return latent_score(l, method_cardinality[m]); }

  // Count of natural parameters of a variable within one mixture component.
  int measurement_param_count(int j) const {
    const VariableSpec& v = variables[j];
    switch (v.family) {
      case Family::gaussian:
      case Family::censored_gaussian: return 4;  // tau, lambda, gamma, sigma
      case Family::multinomial: return 3 * (v.n_categories - 1);
      case Family::cumulative_probit: return (v.n_categories - 1) + 2;
    }
    return 0;
  }

  void check_basic() const {
    if (n_traits < 1 || n_methods < 1) throw ConfigError("design: need at least one trait and one method");
    if ((int)variables.size() != n_variables()) throw ConfigError("design: variable list does not match T*M grid");
    if ((int)trait_cardinality.size() != n_traits) throw ConfigError("design: trait cardinality list size");
    if ((int)method_cardinality.size() != n_methods) throw ConfigError("design: method cardinality list size");
    for (int k : trait_cardinality)
      if (k < 1) throw ConfigError("design: trait cardinality must be >= 1");
    for (int l : method_cardinality)
      if (l < 1) throw ConfigError("design: method cardinality must be >= 1");
    if (n_components < 1) throw ConfigError("design: mixture size must be >= 1");
    for (const auto& v : variables)
      if (family_is_discrete(v.family) && v.n_categories < 2)
        throw ConfigError("design: discrete variable needs >= 2 categories");
    if (n_cells() > 1'000'000)
      throw ConfigError("design: latent cell count exceeds 1e6; enumeration refused");
  }
};

// A fully realized latent configuration: category indices and their scores.
struct LatentCell {
  std::vector<int> trait_category;   // k_t
  std::vector<int> method_category;  // l_m
  int component = 0;                 // s
  std::vector<double> trait_scores;
  std::vector<double> method_scores;
};

struct Violation {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool pass() const { return violations.empty(); }
  void add(std::string code, std::string message) {
    violations.push_back({std::move(code), std::move(message)});
  }
};

}  // namespace gmtmm
