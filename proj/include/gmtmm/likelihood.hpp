#pragma once

// Exact marginal likelihood by enumeration over latent cells, the E-pass
// producing grouped sufficient statistics, posterior responsibilities, and
// the analytic score of the marginal log-likelihood.
//
// The conditional density of variable j depends on the cell only through
// (trait category, method category, component), so each unit needs one
// density evaluation per distinct combo rather than per cell; cell sums are
// table lookups. All downstream quantities (M-step updates, score) are
// computed from weighted group statistics per combo, never from raw
// responsibilities.

#include <Eigen/Dense>

#include "gmtmm/dataset.hpp"
#include "gmtmm/families.hpp"
#include "gmtmm/latent.hpp"
#include "gmtmm/parameters.hpp"

namespace gmtmm {

struct EStats {
  double loglik = 0.0;
  double total_weight = 0.0;
  int n_zero_units = 0;        // units whose likelihood underflowed to zero
  int first_zero_unit = -1;
  int n_all_missing = 0;       // units skipped for having no observed entry

  // Scale families, per variable j, indexed by combo q: W/Sy/Syy over
  // uncensored mass, Wc over censored mass.
  std::vector<VectorXd> W, Sy, Syy, Wc;
  // Discrete families, per variable j: counts[q * n_categories + category].
  std::vector<VectorXd> cat_counts;

  VectorXd trait_counts;               // over joint trait cells
  std::vector<VectorXd> method_counts; // per method, over categories
  VectorXd mix_counts;                 // over components

  void reduce(const EStats& o) {
    loglik += o.loglik;
    total_weight += o.total_weight;
    n_zero_units += o.n_zero_units;
    if (first_zero_unit < 0) first_zero_unit = o.first_zero_unit;
    n_all_missing += o.n_all_missing;
    for (size_t j = 0; j < W.size(); ++j) {
      if (o.W[j].size()) {
        W[j] += o.W[j];
        Sy[j] += o.Sy[j];
        Syy[j] += o.Syy[j];
        Wc[j] += o.Wc[j];
      }
      if (o.cat_counts[j].size()) cat_counts[j] += o.cat_counts[j];
    }
    trait_counts += o.trait_counts;
    for (size_t m = 0; m < method_counts.size(); ++m) method_counts[m] += o.method_counts[m];
    mix_counts += o.mix_counts;
  }
};

class LikelihoodEngine {
 public:
  explicit LikelihoodEngine(const MtmmDesign& design) : cs_(design) {}

  const CellStructure& cells() const { return cs_; }
  const MtmmDesign& design() const { return cs_.design(); }

  EStats epass(const ParameterSet& params, const Dataset& data, int n_threads = 1) const {
    const MtmmDesign& d = design();
    const LatentTables lt = compute_latent_tables(params, cs_);
    const int J = d.n_variables();
    const std::int64_t C = cs_.n_cells();
    const int N = data.n_units();

    auto make_stats = [&] {
      EStats st;
      st.W.resize(J); st.Sy.resize(J); st.Syy.resize(J); st.Wc.resize(J);
      st.cat_counts.resize(J);
      for (int j = 0; j < J; ++j) {
        const int Q = cs_.combo_count(j);
        if (family_has_scale(d.variables[j].family)) {
          st.W[j] = VectorXd::Zero(Q);
          st.Sy[j] = VectorXd::Zero(Q);
          st.Syy[j] = VectorXd::Zero(Q);
          st.Wc[j] = VectorXd::Zero(Q);
        } else {
          st.cat_counts[j] = VectorXd::Zero(Q * d.variables[j].n_categories);
        }
      }
      st.trait_counts = VectorXd::Zero(cs_.n_trait_cells());
      st.method_counts.resize(d.n_methods);
      for (int m = 0; m < d.n_methods; ++m)
        st.method_counts[m] = VectorXd::Zero(d.method_cardinality[m]);
      st.mix_counts = VectorXd::Zero(d.n_components);
      return st;
    };

    const std::int64_t chunk = 256;
    const std::int64_t n_chunks = (N + chunk - 1) / chunk;
    std::vector<EStats> partial((size_t)n_chunks);

    for_each_chunk(N, chunk, n_threads, [&](std::int64_t ci, std::int64_t lo, std::int64_t hi) {
      EStats st = make_stats();
      std::vector<VectorXd> tab(J);
      for (int j = 0; j < J; ++j) tab[j].resize(cs_.combo_count(j));
      VectorXd lc(C), r(C);
      std::vector<int> obs;
      obs.reserve(J);
      const int S = cs_.n_components();
      const std::int64_t B = cs_.n_method_cells();

      for (std::int64_t i = lo; i < hi; ++i) {
        obs.clear();
        for (int j = 0; j < J; ++j)
          if (data.observed(int(i), j)) obs.push_back(j);
        if (obs.empty()) {
          ++st.n_all_missing;
          continue;
        }
        const double wi = data.weights[i];
        st.total_weight += wi;

        for (int j : obs) {
          const int t = d.var_trait(j), m = d.var_method(j);
          const double y = data.y(i, j);
          const VariableSpec& var = d.variables[j];
          const int Lm = d.method_cardinality[m], K = d.trait_cardinality[t];
          const double* vals = params.values().data();
          for (int k = 0; k < K; ++k) {
            const double u = d.trait_score(t, k);
            for (int l = 0; l < Lm; ++l) {
              const double v = d.method_score(m, l);
              for (int s = 0; s < S; ++s) {
                const double* block = vals + params.layout().block_start(j, s);
                tab[j][(k * Lm + l) * S + s] = fam::logdensity(var, block, u, v, y);
              }
            }
          }
        }

        for (std::int64_t c = 0; c < C; ++c) {
          double acc = lt.log_cell[c];
          for (int j : obs) acc += tab[j][cs_.cell_combos(j)[c]];
          lc[c] = acc;
        }
        const double ll_i = log_sum_exp({lc.data(), size_t(C)});
        if (!std::isfinite(ll_i)) {
          ++st.n_zero_units;
          if (st.first_zero_unit < 0) st.first_zero_unit = int(i);
          continue;
        }
        st.loglik += wi * ll_i;

        for (std::int64_t c = 0; c < C; ++c) r[c] = std::exp(lc[c] - ll_i);

        // collapse responsibilities into per-variable combos and latent tables
        for (int j : obs) tab[j].setZero();
        for (std::int64_t c = 0; c < C; ++c) {
          const double rc = r[c];
          for (int j : obs) tab[j][cs_.cell_combos(j)[c]] += rc;
          st.trait_counts[cs_.trait_cell_of(c)] += wi * rc;
          st.mix_counts[cs_.component_of(c)] += wi * rc;
        }
        {
          // method marginals via the (small) joint method-cell table
          VectorXd tb = VectorXd::Zero(B);
          for (std::int64_t c = 0; c < C; ++c) tb[cs_.method_cell_of(c)] += r[c];
          for (std::int64_t b = 0; b < B; ++b)
            for (int m = 0; m < d.n_methods; ++m)
              st.method_counts[m][cs_.method_cat(b, m)] += wi * tb[b];
        }
        for (int j : obs) {
          const double y = data.y(i, j);
          const VariableSpec& var = d.variables[j];
          const int Q = cs_.combo_count(j);
          if (family_has_scale(var.family)) {
            const bool cens = var.family == Family::censored_gaussian && y <= var.censor_bound;
            for (int q = 0; q < Q; ++q) {
              const double wq = wi * tab[j][q];
              if (wq == 0.0) continue;
              if (cens) {
                st.Wc[j][q] += wq;
              } else {
                st.W[j][q] += wq;
                st.Sy[j][q] += wq * y;
                st.Syy[j][q] += wq * y * y;
              }
            }
          } else {
            const int cat = int(y), ncat = var.n_categories;
            for (int q = 0; q < Q; ++q) st.cat_counts[j][q * ncat + cat] += wi * tab[j][q];
          }
        }
      }
      partial[(size_t)ci] = std::move(st);
    });

    EStats total = std::move(partial[0]);
    for (size_t c = 1; c < partial.size(); ++c) total.reduce(partial[c]);
    return total;
  }

  // Spec operation: weighted marginal log-likelihood. Zero-likelihood units
  // are a numerical error; all-missing units are excluded (count available
  // through epass for callers that need the warning detail).
  double marginal_loglik(const ParameterSet& params, const Dataset& data,
                         int n_threads = 1) const {
    EStats st = epass(params, data, n_threads);
    if (st.n_zero_units > 0)
      throw NumericalError("unit " + std::to_string(st.first_zero_unit) +
                           " has zero likelihood at the given parameters");
    return st.loglik;
  }

  // N x n_cells responsibility matrix; rows sum to one.
  MatrixXd posterior_cells(const ParameterSet& params, const Dataset& data) const {
    const MtmmDesign& d = design();
    const LatentTables lt = compute_latent_tables(params, cs_);
    const int J = d.n_variables(), N = data.n_units();
    const std::int64_t C = cs_.n_cells();
    MatrixXd R(N, C);
    std::vector<VectorXd> tab(J);
    for (int j = 0; j < J; ++j) tab[j].resize(cs_.combo_count(j));
    VectorXd lc(C);
    const int S = cs_.n_components();
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < J; ++j) {
        if (!data.observed(i, j)) continue;
        const int t = d.var_trait(j), m = d.var_method(j);
        const VariableSpec& var = d.variables[j];
        const int Lm = d.method_cardinality[m], K = d.trait_cardinality[t];
        for (int k = 0; k < K; ++k)
          for (int l = 0; l < Lm; ++l)
            for (int s = 0; s < S; ++s)
              tab[j][(k * Lm + l) * S + s] =
                  fam::logdensity(var, params.values().data() + params.layout().block_start(j, s),
                                  d.trait_score(t, k), d.method_score(m, l), data.y(i, j));
      }
      for (std::int64_t c = 0; c < C; ++c) {
        double acc = lt.log_cell[c];
        for (int j = 0; j < J; ++j)
          if (data.observed(i, j)) acc += tab[j][cs_.cell_combos(j)[c]];
        lc[c] = acc;
      }
      const double ll = log_sum_exp({lc.data(), size_t(C)});
      if (!std::isfinite(ll))
        throw NumericalError("unit " + std::to_string(i) + " has zero likelihood");
      for (std::int64_t c = 0; c < C; ++c) R(i, c) = std::exp(lc[c] - ll);
    }
    return R;
  }

  // Analytic score of the marginal log-likelihood with respect to the
  // natural parameters, assembled from grouped statistics (Fisher identity:
  // the score equals the posterior expectation of the complete-data score).
  VectorXd score_natural(const ParameterSet& params, const EStats& st) const {
    const MtmmDesign& d = design();
    const ParameterLayout& L = params.layout();
    const LatentTables lt = compute_latent_tables(params, cs_);
    VectorXd g = VectorXd::Zero(L.size());
    const int S = d.n_components;

    for (int j = 0; j < d.n_variables(); ++j) {
      const int t = d.var_trait(j), m = d.var_method(j);
      const VariableSpec& var = d.variables[j];
      const int Q = cs_.combo_count(j);
      for (int q = 0; q < Q; ++q) {
        int k, l, s;
        cs_.combo_parts(j, q, k, l, s);
        const double u = d.trait_score(t, k), v = d.method_score(m, l);
        const double* block = params.values().data() + L.block_start(j, s);
        double* gblock = g.data() + L.block_start(j, s);
        if (family_has_scale(var.family)) {
          const double nu = fam::predictor(block, u, v), sigma = block[3];
          const double Wq = st.W[j][q], Syq = st.Sy[j][q], Syyq = st.Syy[j][q];
          if (Wq > 0.0) {
            const double dnu = (Syq - nu * Wq) / (sigma * sigma);
            const double zz = (Syyq - 2.0 * nu * Syq + nu * nu * Wq) / (sigma * sigma);
            gblock[0] += dnu;
            gblock[1] += dnu * u;
            gblock[2] += dnu * v;
            gblock[3] += (zz - Wq) / sigma;
          }
          if (var.family == Family::censored_gaussian && st.Wc[j][q] > 0.0) {
            const double zc = (var.censor_bound - nu) / sigma;
            const double h = norm_hazard(zc);
            const double dnu = -st.Wc[j][q] * h / sigma;
            gblock[0] += dnu;
            gblock[1] += dnu * u;
            gblock[2] += dnu * v;
            gblock[3] += -st.Wc[j][q] * h * zc / sigma;
          }
        } else {
          const int ncat = var.n_categories;
          for (int c = 0; c < ncat; ++c) {
            const double cnt = st.cat_counts[j][q * ncat + c];
            if (cnt == 0.0) continue;
            fam::grad(var, block, u, v, double(c), cnt, gblock);
          }
        }
      }
    }

    // latent log-linear blocks
    const double Wtot = st.total_weight;
    for (int t = 0; t < d.n_traits; ++t) {
      const int K = d.trait_cardinality[t];
      if (K < 2) continue;
      VectorXd nk = VectorXd::Zero(K);
      for (std::int64_t a = 0; a < cs_.n_trait_cells(); ++a)
        nk[cs_.trait_cat(a, t)] += st.trait_counts[a];
      for (int k = 0; k + 1 < K; ++k)
        g[L.alpha_index(t, k)] += nk[k] - Wtot * lt.trait_marginal[t][k];
    }
    for (int t = 0; t < d.n_traits; ++t)
      for (int tp = t + 1; tp < d.n_traits; ++tp) {
        const int p = L.phi_index(t, tp);
        if (p < 0) continue;
        double suu = 0.0;
        for (std::int64_t a = 0; a < cs_.n_trait_cells(); ++a)
          suu += st.trait_counts[a] * d.trait_score(t, cs_.trait_cat(a, t)) *
                 d.trait_score(tp, cs_.trait_cat(a, tp));
        g[p] += suu - Wtot * lt.uu_expect(t, tp);
      }
    for (int m = 0; m < d.n_methods; ++m) {
      const int Lm = d.method_cardinality[m];
      for (int l = 0; l + 1 < Lm; ++l)
        g[L.kappa_index(m, l)] +=
            st.method_counts[m][l] - Wtot * std::exp(lt.log_method[m][l]);
    }
    for (int s = 0; s + 1 < d.n_components; ++s)
      g[L.rho_index(s)] += st.mix_counts[s] - Wtot * lt.mix_prob[s];

    return g;
  }

  VectorXd score_free(const ParameterSet& params, const Dataset& data, int n_threads = 1) const {
    EStats st = epass(params, data, n_threads);
    VectorXd gnat = score_natural(params, st);
    return params.layout().chain_to_free(gnat, params.values());
  }

  // Observed information on the unconstrained scale via central finite
  // differences of the analytic score.
  MatrixXd observed_information(const ParameterSet& params, const Dataset& data,
                                double step = 1e-5, int n_threads = 1) const {
    const int p = params.n_free();
    const VectorXd u0 = params.free_vector();
    MatrixXd I(p, p);
    ParameterSet work = params;
    for (int f = 0; f < p; ++f) {
      VectorXd u = u0;
      u[f] = u0[f] + step;
      work.set_free(u);
      VectorXd gp = score_free(work, data, n_threads);
      u[f] = u0[f] - step;
      work.set_free(u);
      VectorXd gm = score_free(work, data, n_threads);
      I.col(f) = -(gp - gm) / (2.0 * step);
    }
    return 0.5 * (I + I.transpose());
  }

 private:
  CellStructure cs_;
};

}  // namespace gmtmm
