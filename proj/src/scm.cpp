#include "scmkit/scm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "scmkit/errors.hpp"
#include "scmkit/rng.hpp"

namespace scmkit {

namespace {

constexpr std::uint64_t kMultistartSeedBase = 9120347ULL;

Eigen::VectorXd softmax(const Eigen::VectorXd& theta) {
  const double shift = theta.maxCoeff();
  Eigen::VectorXd out = (theta.array() - shift).exp();
  return out / out.sum();
}

struct VCandidate {
  Eigen::VectorXd v;
  double validation_mspe = 0.0;
  double training_mspe = 0.0;
};

// Best validation MSPE wins; ties by training MSPE, then lexicographic V.
bool candidate_better(const VCandidate& a, const VCandidate& b) {
  if (a.validation_mspe != b.validation_mspe)
    return a.validation_mspe < b.validation_mspe;
  if (a.training_mspe != b.training_mspe)
    return a.training_mspe < b.training_mspe;
  for (Eigen::Index i = 0; i < a.v.size(); ++i)
    if (a.v(i) != b.v(i)) return a.v(i) < b.v(i);
  return false;
}

struct VSearchContext {
  Eigen::VectorXd xs_treated;
  Eigen::MatrixXd xs_donors;
  Eigen::VectorXd y_treated;
  Eigen::MatrixXd y_donors;
  std::vector<Eigen::Index> training_rows;
  std::vector<Eigen::Index> validation_rows;
  QpOptions qp;

  VCandidate evaluate(const Eigen::VectorXd& v) const {
    const QpSolution sol = solve_simplex_wls(xs_treated, xs_donors, v, qp);
    const Eigen::VectorXd residual =
        y_treated - y_donors * sol.weights.values;
    auto mspe_over = [&](const std::vector<Eigen::Index>& rows) {
      double acc = 0.0;
      for (const auto r : rows) acc += residual(r) * residual(r);
      return rows.empty() ? 0.0 : acc / static_cast<double>(rows.size());
    };
    return {v, mspe_over(validation_rows), mspe_over(training_rows)};
  }
};

/**
 * Nelder-Mead on f over R^n, deterministic ordering. Returns the best
 * vertex ever evaluated.
 */
template <typename F>
std::pair<Eigen::VectorXd, double> nelder_mead(F&& f,
                                               const Eigen::VectorXd& start,
                                               int max_evals) {
  const auto n = start.size();
  std::vector<Eigen::VectorXd> xs;
  std::vector<double> fs;
  xs.push_back(start);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd x = start;
    x(i) += 0.5;
    xs.push_back(x);
  }
  int evals = 0;
  for (auto& x : xs) fs.push_back(f(x)), ++evals;

  Eigen::VectorXd best_x = xs[0];
  double best_f = fs[0];
  auto note = [&](const Eigen::VectorXd& x, double fx) {
    if (fx < best_f) {
      best_f = fx;
      best_x = x;
    }
  };
  for (std::size_t i = 0; i < xs.size(); ++i) note(xs[i], fs[i]);

  std::vector<std::size_t> order(xs.size());
  while (evals < max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
    const std::size_t lo = order.front(), hi = order.back();
    const std::size_t second_hi = order[order.size() - 2];

    // Scale-free stopping: MSPE landscapes arrive in arbitrary units.
    if (std::abs(fs[hi] - fs[lo]) <= 1e-13 * std::abs(fs[lo])) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (const auto idx : order)
      if (idx != hi) centroid += xs[idx];
    centroid /= static_cast<double>(xs.size() - 1);

    const Eigen::VectorXd xr = centroid + (centroid - xs[hi]);
    const double fr = f(xr);
    ++evals;
    note(xr, fr);

    if (fr < fs[lo]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - xs[hi]);
      const double fe = f(xe);
      ++evals;
      note(xe, fe);
      if (fe < fr) {
        xs[hi] = xe;
        fs[hi] = fe;
      } else {
        xs[hi] = xr;
        fs[hi] = fr;
      }
    } else if (fr < fs[second_hi]) {
      xs[hi] = xr;
      fs[hi] = fr;
    } else {
      const bool outside = fr < fs[hi];
      Eigen::VectorXd xc;
      if (outside)
        xc = centroid + 0.5 * (xr - centroid);
      else
        xc = centroid - 0.5 * (centroid - xs[hi]);
      const double fc = f(xc);
      ++evals;
      note(xc, fc);
      if (fc < std::min(fr, fs[hi])) {
        xs[hi] = xc;
        fs[hi] = fc;
      } else {
        for (const auto idx : order) {
          if (idx == lo) continue;
          xs[idx] = xs[lo] + 0.5 * (xs[idx] - xs[lo]);
          fs[idx] = f(xs[idx]);
          ++evals;
          note(xs[idx], fs[idx]);
          if (evals >= max_evals) break;
        }
      }
    }
  }
  return {best_x, best_f};
}

// All simplex points with coordinates that are multiples of 1/steps.
void enumerate_simplex_grid(Eigen::Index k, int steps,
                            const std::function<void(const Eigen::VectorXd&)>& emit) {
  Eigen::VectorXd v(k);
  std::function<void(Eigen::Index, int)> rec = [&](Eigen::Index dim,
                                                   int remaining) {
    if (dim == k - 1) {
      v(dim) = static_cast<double>(remaining) / steps;
      emit(v);
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      v(dim) = static_cast<double>(c) / steps;
      rec(dim + 1, remaining - c);
    }
  };
  rec(0, steps);
}

double mean_of(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) /
         static_cast<double>(xs.size());
}

}  // namespace

PredictorWeights optimize_predictor_weights(const PanelDataset& data,
                                            const StudySpec& spec,
                                            const FitOptions& options) {
  const auto k = static_cast<Eigen::Index>(spec.predictors.size());
  if (k == 0) throw ConfigError("study defines no predictors");
  if (k == 1) {
    PredictorWeights v;
    v.values = Eigen::VectorXd::Ones(1);
    return v;
  }

  const auto validation_periods =
      data.periods_in(spec.training_end + 1, spec.treatment_period - 1);
  if (validation_periods.empty())
    throw ConfigError("validation window (training_end, treatment_period) "
                      "contains no dataset periods");

  const PredictorMatrices training =
      build_predictor_matrices(data, spec, spec.training_end);
  const StandardizedPredictors xs = standardize_predictors(
      training.x_treated, training.x_donors, training.predictor_labels);

  VSearchContext ctx;
  ctx.xs_treated = xs.x_treated;
  ctx.xs_donors = xs.x_donors;
  ctx.y_treated = training.y_treated_pre;
  ctx.y_donors = training.y_donors_pre;
  ctx.qp = options.effective_qp();
  for (std::size_t r = 0; r < training.pre_periods.size(); ++r) {
    const int p = training.pre_periods[r];
    if (p <= spec.training_end)
      ctx.training_rows.push_back(static_cast<Eigen::Index>(r));
    else
      ctx.validation_rows.push_back(static_cast<Eigen::Index>(r));
  }

  std::vector<VCandidate> candidates;
  auto run_nm = [&](const Eigen::VectorXd& theta0) {
    const auto [theta, fval] = nelder_mead(
        [&](const Eigen::VectorXd& th) {
          return ctx.evaluate(softmax(th)).validation_mspe;
        },
        theta0, 80 + 40 * static_cast<int>(k));
    (void)fval;
    candidates.push_back(ctx.evaluate(softmax(theta)));
  };

  // Five deterministic multistarts: equal weights plus four seeded points.
  run_nm(Eigen::VectorXd::Zero(k));
  for (std::uint64_t s = 1; s <= 4; ++s) {
    Rng rng(kMultistartSeedBase + s);
    Eigen::VectorXd theta(k);
    for (Eigen::Index i = 0; i < k; ++i) theta(i) = rng.normal();
    run_nm(theta);
  }

  if (k <= 3) {
    // Exhaustive cross-check on the 0.02-step simplex grid, plus a local
    // polish started from the best grid point.
    VCandidate grid_best;
    bool have = false;
    enumerate_simplex_grid(k, 50, [&](const Eigen::VectorXd& v) {
      VCandidate c = ctx.evaluate(v);
      if (!have || candidate_better(c, grid_best)) {
        grid_best = c;
        have = true;
      }
      candidates.push_back(std::move(c));
    });
    Eigen::VectorXd theta(k);
    for (Eigen::Index i = 0; i < k; ++i)
      theta(i) = std::log(std::max(grid_best.v(i), 1e-12));
    run_nm(theta);
  }

  const VCandidate* best = &candidates.front();
  for (const auto& c : candidates)
    if (candidate_better(c, *best)) best = &c;

  PredictorWeights out;
  out.values = best->v / best->v.sum();
  return out;
}

SyntheticControlFit fit_synthetic_control(
    const PanelDataset& data, const StudySpec& spec,
    const std::optional<PredictorWeights>& v, const FitOptions& options) {
  const bool single_donor =
      options.allow_single_donor && spec.donor_units.size() == 1;
  ValidationReport validation = validate_study(data, spec);
  if (single_donor)
    std::erase_if(validation.violations, [](const Violation& violation) {
      return violation.code == "too-few-donors";
    });
  if (!validation.ok())
    throw FitError("study rejected by validation:\n" + validation.to_string());

  SyntheticControlFit fit;
  fit.donor_units = spec.donor_units;
  if (single_donor) {
    // w = (1) regardless of V; keep the provided weights for the report.
    fit.predictor_weights.values =
        v ? v->values
          : Eigen::VectorXd::Constant(
                static_cast<Eigen::Index>(spec.predictors.size()),
                1.0 / static_cast<double>(spec.predictors.size()));
  } else {
    fit.predictor_weights =
        v ? *v : optimize_predictor_weights(data, spec, options);
  }
  if (fit.predictor_weights.values.size() !=
      static_cast<Eigen::Index>(spec.predictors.size()))
    throw FitError("predictor weight vector does not match predictor count");

  const PredictorMatrices full = build_predictor_matrices(data, spec);
  fit.warnings = full.warnings;

  if (single_donor) {
    fit.standardization.labels = full.predictor_labels;
    fit.qp = solve_simplex_wls(full.x_treated, full.x_donors,
                               fit.predictor_weights.values,
                               options.effective_qp());
  } else if (options.frozen_standardization) {
    const StandardizationStats& stats = *options.frozen_standardization;
    if (stats.mean.size() != full.x_treated.size())
      throw FitError("frozen standardization does not match the predictors");
    fit.standardization = stats;
    const Eigen::VectorXd xs1 =
        (full.x_treated - stats.mean).cwiseQuotient(stats.stddev);
    Eigen::MatrixXd xs0 = full.x_donors;
    xs0.colwise() -= stats.mean;
    xs0.array().colwise() /= stats.stddev.array();
    fit.qp = solve_simplex_wls(xs1, xs0, fit.predictor_weights.values,
                               options.effective_qp());
  } else {
    const StandardizedPredictors xs = standardize_predictors(
        full.x_treated, full.x_donors, full.predictor_labels);
    fit.standardization = xs.stats;
    fit.qp = solve_simplex_wls(xs.x_treated, xs.x_donors,
                               fit.predictor_weights.values,
                               options.effective_qp());
  }
  if (!fit.qp.converged) {
    std::ostringstream os;
    os << "weight solver did not converge: kkt_residual="
       << fit.qp.kkt_residual << " tol=" << options.effective_qp().tol
       << " iterations=" << fit.qp.iterations
       << " objective=" << fit.qp.objective;
    throw FitError(os.str());
  }
  fit.weights = fit.qp.weights;

  const Eigen::VectorXd& w = fit.weights.values;
  const auto window = data.periods_in(spec.t_start, spec.t_end);
  for (const int p : window) {
    double synth = 0.0;
    for (std::size_t d = 0; d < spec.donor_units.size(); ++d)
      synth += w(static_cast<Eigen::Index>(d)) *
               data.value(spec.donor_units[d], spec.outcome, p);
    fit.synthetic_path[p] = synth;
    fit.observed_path[p] = data.value(spec.treated_unit, spec.outcome, p);
  }
  fit.gap_series = compute_gap_series(fit.observed_path, fit.synthetic_path);

  std::vector<double> pre_sq, post;
  for (const auto& [p, gap] : fit.gap_series) {
    if (p < spec.treatment_period)
      pre_sq.push_back(gap * gap);
    else
      post.push_back(gap);
  }
  if (pre_sq.empty() || post.empty())
    throw FitError("study window has no pre or no post periods");
  fit.pre_rmspe = std::sqrt(mean_of(pre_sq));
  fit.att = mean_of(post);
  fit.end_of_sample_delta = fit.gap_series.rbegin()->second;

  for (std::size_t i = 0; i < full.predictor_labels.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    fit.predictor_balance.push_back({full.predictor_labels[i],
                                     full.x_treated(idx),
                                     full.x_donors.row(idx).dot(w)});
  }
  return fit;
}

Series compute_gap_series(const Series& observed, const Series& synthetic) {
  if (observed.size() != synthetic.size())
    throw FitError("gap series: period domains differ");
  Series out;
  auto it = synthetic.begin();
  for (const auto& [p, obs] : observed) {
    if (it->first != p) throw FitError("gap series: period domains differ");
    out[p] = obs - it->second;
    ++it;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Factor-model simulator
// ---------------------------------------------------------------------------

std::vector<std::string> factor_model_units(const FactorModelSpec& spec) {
  std::vector<std::string> names;
  names.push_back(spec.treated_unit);
  int width = 1;
  for (int v = spec.n_units - 1; v >= 10; v /= 10) ++width;
  for (int i = 1; i < spec.n_units; ++i) {
    std::string num = std::to_string(i);
    names.push_back(spec.donor_prefix +
                    std::string(width - static_cast<int>(num.size()), '0') +
                    num);
  }
  return names;
}

PanelDataset simulate_factor_model(const FactorModelSpec& spec) {
  if (spec.n_units < 1 || spec.n_periods < 1)
    throw ConfigError("simulator needs at least one unit and one period");
  if (spec.noise_scale < 0.0)
    throw ConfigError("noise scale must be nonnegative");
  const Eigen::Index t = spec.n_periods;
  const Eigen::Index n = spec.n_units;
  const Eigen::Index r = spec.covariates.size() ? spec.covariates.cols() : 0;
  const Eigen::Index f = spec.factors.size() ? spec.factors.cols() : 0;
  if (spec.time_effects.size() != t)
    throw ConfigError("time_effects must have one entry per period");
  if (r > 0 && (spec.covariates.rows() != n ||
                spec.covariate_loadings.rows() != t ||
                spec.covariate_loadings.cols() != r))
    throw ConfigError("covariate block dimensions are inconsistent");
  if (f > 0 && (spec.factor_loadings.rows() != n ||
                spec.factors.rows() != t || spec.factor_loadings.cols() != f))
    throw ConfigError("factor block dimensions are inconsistent");

  const auto names = factor_model_units(spec);
  PanelDataset data;
  Rng rng(spec.seed);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index s = 0; s < t; ++s) {
      const int period = spec.first_period + static_cast<int>(s);
      double value = spec.time_effects(s);
      if (r > 0) value += spec.covariate_loadings.row(s).dot(spec.covariates.row(i));
      if (f > 0) value += spec.factors.row(s).dot(spec.factor_loadings.row(i));
      if (spec.noise_scale > 0.0) value += spec.noise_scale * rng.normal();
      if (i == 0 && spec.treatment_effect && period >= spec.treatment_period)
        value += spec.treatment_effect(period);
      data.set_value(names[static_cast<std::size_t>(i)], spec.outcome_name,
                     period, value);
    }
    for (Eigen::Index c = 0; c < r; ++c)
      data.set_static(names[static_cast<std::size_t>(i)],
                      spec.covariate_prefix + std::to_string(c + 1),
                      spec.covariates(i, c));
  }
  return data;
}

FactorModelSpec random_factor_model_spec(const FactorModelGenOptions& gen) {
  if (gen.n_units < 2 || gen.n_periods < 2)
    throw ConfigError("factor model generator needs >= 2 units and periods");
  FactorModelSpec spec;
  spec.n_units = gen.n_units;
  spec.n_periods = gen.n_periods;
  spec.first_period = gen.first_period;
  spec.treatment_period = gen.treatment_period;
  spec.noise_scale = gen.noise_scale;
  spec.seed = gen.seed + 1;  // structure and noise use distinct streams

  Rng rng(gen.seed);
  const Eigen::Index t = gen.n_periods;
  const Eigen::Index n = gen.n_units;
  const Eigen::Index r = gen.n_covariates;
  const Eigen::Index f = gen.n_factors;

  spec.time_effects.resize(t);
  for (Eigen::Index s = 0; s < t; ++s)
    spec.time_effects(s) = gen.signal_scale * rng.normal();

  spec.covariate_loadings.resize(t, r);
  for (Eigen::Index s = 0; s < t; ++s)
    for (Eigen::Index c = 0; c < r; ++c)
      spec.covariate_loadings(s, c) = gen.signal_scale * rng.normal();
  spec.factors.resize(t, f);
  for (Eigen::Index s = 0; s < t; ++s)
    for (Eigen::Index c = 0; c < f; ++c)
      spec.factors(s, c) = gen.signal_scale * rng.normal();

  spec.covariates.resize(n, r);
  spec.factor_loadings.resize(n, f);
  for (Eigen::Index i = 1; i < n; ++i) {
    for (Eigen::Index c = 0; c < r; ++c) spec.covariates(i, c) = rng.normal();
    for (Eigen::Index c = 0; c < f; ++c)
      spec.factor_loadings(i, c) = rng.normal();
  }
  if (gen.treated_in_hull) {
    // Treated loadings are a random convex combination of every donor's.
    Eigen::VectorXd alpha(n - 1);
    for (Eigen::Index i = 0; i < n - 1; ++i)
      alpha(i) = -std::log(1.0 - rng.uniform());
    alpha /= alpha.sum();
    spec.covariates.row(0).setZero();
    spec.factor_loadings.row(0).setZero();
    for (Eigen::Index i = 1; i < n; ++i) {
      spec.covariates.row(0) += alpha(i - 1) * spec.covariates.row(i);
      spec.factor_loadings.row(0) += alpha(i - 1) * spec.factor_loadings.row(i);
    }
  } else {
    for (Eigen::Index c = 0; c < r; ++c) spec.covariates(0, c) = rng.normal();
    for (Eigen::Index c = 0; c < f; ++c)
      spec.factor_loadings(0, c) = rng.normal();
  }

  if (gen.delta != 0.0) {
    const double delta = gen.delta;
    spec.treatment_effect = [delta](int) { return delta; };
  }
  return spec;
}

StudySpec default_simulated_study(const FactorModelSpec& spec, int n_lags) {
  const auto units = factor_model_units(spec);
  StudySpec study;
  study.treated_unit = units.front();
  study.donor_units.assign(units.begin() + 1, units.end());
  study.outcome = spec.outcome_name;
  study.t_start = spec.first_period;
  study.t_end = spec.first_period + spec.n_periods - 1;
  study.treatment_period = spec.treatment_period;

  const int n_pre = spec.treatment_period - spec.first_period;
  const int n_validation = std::max(2, n_pre / 3);
  study.training_end = spec.treatment_period - 1 - n_validation;
  if (study.training_end <= study.t_start)
    throw ConfigError("simulated panel has too few pre-treatment periods");

  n_lags = std::min(n_lags, n_pre);
  for (int i = 0; i < n_lags; ++i) {
    PredictorDef def;
    def.kind = PredictorKind::OutcomeLag;
    def.name = spec.outcome_name;
    const int span = n_pre - 1;
    def.period = spec.first_period +
                 (n_lags == 1 ? span : span * i / (n_lags - 1));
    study.predictors.push_back(def);
  }
  const Eigen::Index r = spec.covariates.size() ? spec.covariates.cols() : 0;
  for (Eigen::Index c = 0; c < r; ++c) {
    PredictorDef def;
    def.kind = PredictorKind::Covariate;
    def.name = spec.covariate_prefix + std::to_string(c + 1);
    study.predictors.push_back(def);
  }
  return study;
}

}  // namespace scmkit
