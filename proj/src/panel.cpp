#include "scmkit/panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "scmkit/text.hpp"

namespace scmkit {

namespace {

std::string key_string(const std::string& unit, const std::string& variable,
                       std::optional<int> period) {
  std::string out = "(" + unit + ", ";
  out += period ? std::to_string(*period) : std::string("-");
  out += ", " + variable + ")";
  return out;
}

}  // namespace

void PanelDataset::note_unit(const std::string& unit) {
  const auto it = std::lower_bound(units_.begin(), units_.end(), unit);
  if (it == units_.end() || *it != unit) units_.insert(it, unit);
}

void PanelDataset::note_period(int period) {
  const auto it = std::lower_bound(periods_.begin(), periods_.end(), period);
  if (it == periods_.end() || *it != period) periods_.insert(it, period);
}

void PanelDataset::set_value(const std::string& unit,
                             const std::string& variable, int period,
                             double value) {
  if (!std::isfinite(value))
    throw PanelError("non-finite value for key " +
                     key_string(unit, variable, period));
  auto& cell = series_[unit][variable];
  if (cell.count(period))
    throw PanelError("duplicate key " + key_string(unit, variable, period));
  cell.emplace(period, value);
  note_unit(unit);
  note_period(period);
}

void PanelDataset::set_static(const std::string& unit,
                              const std::string& variable, double value) {
  if (!std::isfinite(value))
    throw PanelError("non-finite value for key " +
                     key_string(unit, variable, std::nullopt));
  auto& vars = statics_[unit];
  if (vars.count(variable))
    throw PanelError("duplicate key " +
                     key_string(unit, variable, std::nullopt));
  vars.emplace(variable, value);
  note_unit(unit);
}

std::vector<int> PanelDataset::periods_in(int lo, int hi) const {
  std::vector<int> out;
  for (int p : periods_)
    if (p >= lo && p <= hi) out.push_back(p);
  return out;
}

bool PanelDataset::has_value(const std::string& unit,
                             const std::string& variable, int period) const {
  return maybe_value(unit, variable, period).has_value();
}

std::optional<double> PanelDataset::maybe_value(const std::string& unit,
                                                const std::string& variable,
                                                int period) const {
  const auto u = series_.find(unit);
  if (u == series_.end()) return std::nullopt;
  const auto v = u->second.find(variable);
  if (v == u->second.end()) return std::nullopt;
  const auto p = v->second.find(period);
  if (p == v->second.end()) return std::nullopt;
  return p->second;
}

double PanelDataset::value(const std::string& unit,
                           const std::string& variable, int period) const {
  const auto v = maybe_value(unit, variable, period);
  if (!v)
    throw PanelError("missing value for key " +
                     key_string(unit, variable, period));
  return *v;
}

bool PanelDataset::has_static(const std::string& unit,
                              const std::string& variable) const {
  return maybe_static(unit, variable).has_value();
}

std::optional<double> PanelDataset::maybe_static(
    const std::string& unit, const std::string& variable) const {
  const auto u = statics_.find(unit);
  if (u == statics_.end()) return std::nullopt;
  const auto v = u->second.find(variable);
  if (v == u->second.end()) return std::nullopt;
  return v->second;
}

double PanelDataset::static_value(const std::string& unit,
                                  const std::string& variable) const {
  const auto v = maybe_static(unit, variable);
  if (!v)
    throw PanelError("missing value for key " +
                     key_string(unit, variable, std::nullopt));
  return *v;
}

bool PanelDataset::has_series_variable(const std::string& variable) const {
  for (const auto& [unit, vars] : series_)
    if (vars.count(variable)) return true;
  return false;
}

bool PanelDataset::has_static_variable(const std::string& variable) const {
  for (const auto& [unit, vars] : statics_)
    if (vars.count(variable)) return true;
  return false;
}

bool PanelDataset::has_variable(const std::string& variable) const {
  return has_series_variable(variable) || has_static_variable(variable);
}

std::vector<std::string> PanelDataset::series_variables() const {
  std::set<std::string> names;
  for (const auto& [unit, vars] : series_)
    for (const auto& [var, cells] : vars) names.insert(var);
  return {names.begin(), names.end()};
}

std::vector<std::string> PanelDataset::static_variables() const {
  std::set<std::string> names;
  for (const auto& [unit, vars] : statics_)
    for (const auto& [var, v] : vars) names.insert(var);
  return {names.begin(), names.end()};
}

// ---------------------------------------------------------------------------
// CSV ingestion / emission
// ---------------------------------------------------------------------------

PanelDataset load_panel_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw PanelError("cannot open panel file: " + path);

  std::string header;
  if (!std::getline(in, header)) throw PanelError(path + ": no data rows");
  if (!header.empty() && header.back() == '\r') header.pop_back();

  const auto cols = split(header, ',');
  auto find_col = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (std::string(trim(cols[i])) == name) return i;
    throw PanelError(path + ": schema error: missing column '" + name + "'");
  };
  const std::size_t unit_col = find_col(schema.unit_column);
  const std::size_t period_col = find_col(schema.period_column);
  const std::size_t variable_col = find_col(schema.variable_column);
  const std::size_t value_col = find_col(schema.value_column);

  PanelDataset data;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != cols.size())
      throw PanelError(path + ":" + std::to_string(line_no) +
                       ": expected " + std::to_string(cols.size()) +
                       " fields, got " + std::to_string(fields.size()));

    const std::string unit{trim(fields[unit_col])};
    const std::string variable{trim(fields[variable_col])};
    if (unit.empty() || variable.empty())
      throw PanelError(path + ":" + std::to_string(line_no) +
                       ": empty unit or variable field");

    const auto value = parse_double(fields[value_col]);
    if (!value || !std::isfinite(*value))
      throw PanelError(path + ":" + std::to_string(line_no) +
                       ": malformed numeric cell '" + fields[value_col] + "'");

    const auto period_field = trim(fields[period_col]);
    try {
      if (period_field.empty()) {
        data.set_static(unit, variable, *value);
      } else {
        const auto period = parse_int(period_field);
        if (!period)
          throw PanelError(path + ":" + std::to_string(line_no) +
                           ": schema error: unparseable period '" +
                           std::string(period_field) + "'");
        data.set_value(unit, variable, *period, *value);
      }
    } catch (const PanelError& e) {
      // Re-tag duplicate-key errors with the offending line.
      const std::string msg = e.what();
      if (msg.find(path) == std::string::npos)
        throw PanelError(path + ":" + std::to_string(line_no) + ": " + msg);
      throw;
    }
  }

  if (data.empty()) throw PanelError(path + ": no data rows");
  return data;
}

void write_panel_csv(const PanelDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PanelError("cannot write panel file: " + path);
  out << "unit,period,variable,value\n";
  data.for_each(
      [&](const std::string& unit, const std::string& var, int period,
          double v) {
        out << unit << ',' << period << ',' << var << ',' << format_double(v)
            << '\n';
      },
      [&](const std::string& unit, const std::string& var, double v) {
        out << unit << ",," << var << ',' << format_double(v) << '\n';
      });
}

void merge_panel(PanelDataset& base, const PanelDataset& extra) {
  extra.for_each(
      [&](const std::string& unit, const std::string& var, int period,
          double v) { base.set_value(unit, var, period, v); },
      [&](const std::string& unit, const std::string& var, double v) {
        base.set_static(unit, var, v);
      });
}

// ---------------------------------------------------------------------------
// Predictor definitions
// ---------------------------------------------------------------------------

std::string PredictorDef::label() const {
  switch (kind) {
    case PredictorKind::OutcomeLag:
      return name + "@" + (period ? std::to_string(*period) : "?");
    case PredictorKind::OutcomeMean:
      return name + ":mean(" + (from ? std::to_string(*from) : "?") + "-" +
             (to ? std::to_string(*to) : "?") + ")";
    case PredictorKind::Covariate:
      if (from || to)
        return name + ":mean(" + (from ? std::to_string(*from) : "?") + "-" +
               (to ? std::to_string(*to) : "?") + ")";
      return name;
  }
  return name;
}

// ---------------------------------------------------------------------------
// Study validation
// ---------------------------------------------------------------------------

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& v : violations) os << v.code << ": " << v.message << "\n";
  return os.str();
}

namespace {

void check_outcome_balance(const PanelDataset& data, const StudySpec& spec,
                           const std::string& outcome, int lo, int hi,
                           std::vector<Violation>& out) {
  std::vector<std::string> all_units = spec.donor_units;
  all_units.push_back(spec.treated_unit);
  for (int p : data.periods_in(lo, hi)) {
    for (const auto& u : all_units) {
      if (!data.has_value(u, outcome, p))
        out.push_back({"unbalanced-panel", "unbalanced panel: " + u + ", " +
                                               std::to_string(p) + " (" +
                                               outcome + ")"});
    }
  }
}

}  // namespace

ValidationReport validate_study(const PanelDataset& data,
                                const StudySpec& spec) {
  ValidationReport report;
  auto& v = report.violations;

  if (!(spec.t_start < spec.training_end &&
        spec.training_end < spec.treatment_period &&
        spec.treatment_period <= spec.t_end))
    v.push_back({"window-order",
                 "window ordering must satisfy t_start < training_end < "
                 "treatment_period <= t_end"});

  if (spec.donor_units.size() < 2)
    v.push_back({"too-few-donors", "donor pool must contain at least 2 units"});

  {
    std::set<std::string> seen;
    for (const auto& d : spec.donor_units) {
      if (!seen.insert(d).second)
        v.push_back({"duplicate-donor", "duplicate donor: " + d});
      if (d == spec.treated_unit)
        v.push_back({"treated-in-donors",
                     "treated unit in donor pool: " + spec.treated_unit});
      for (const auto& ex : spec.excluded_units)
        if (ex.unit == d)
          v.push_back({"excluded-in-donors", "excluded unit in donor pool: " +
                                                 d + " (" + ex.reason + ")"});
    }
  }

  // Units must exist at all before balance makes sense.
  {
    const auto& known = data.units();
    auto missing = [&](const std::string& u) {
      return !std::binary_search(known.begin(), known.end(), u);
    };
    if (missing(spec.treated_unit))
      v.push_back(
          {"unknown-unit", "treated unit not in dataset: " + spec.treated_unit});
    for (const auto& d : spec.donor_units)
      if (missing(d))
        v.push_back({"unknown-unit", "donor not in dataset: " + d});
  }

  if (!data.has_series_variable(spec.outcome))
    v.push_back({"unknown-outcome",
                 "outcome not present in dataset: " + spec.outcome});

  // Stop early when the frame is broken; the remaining checks assume it.
  if (!report.ok()) return report;

  if (data.periods_in(spec.t_start, spec.treatment_period - 1).empty())
    v.push_back({"empty-window", "no dataset periods in pre-treatment window"});
  if (data.periods_in(spec.t_start, spec.training_end).empty())
    v.push_back({"empty-window", "no dataset periods in training window"});
  if (data.periods_in(spec.treatment_period, spec.t_end).empty())
    v.push_back({"empty-window", "no dataset periods in post-treatment window"});

  check_outcome_balance(data, spec, spec.outcome, spec.t_start, spec.t_end, v);

  std::vector<std::string> all_units = spec.donor_units;
  all_units.push_back(spec.treated_unit);

  // Outcome-kind predictors need balanced cells from t_start up to the last
  // referenced period (clamped training builds may look anywhere below it).
  std::map<std::string, int> outcome_needed_until;
  auto require_outcome = [&](const std::string& name, int hi) {
    const int bound = std::min(hi, spec.treatment_period - 1);
    auto [it, inserted] = outcome_needed_until.emplace(name, bound);
    if (!inserted) it->second = std::max(it->second, bound);
  };

  for (const auto& def : spec.predictors) {
    const std::string lbl = def.label();
    switch (def.kind) {
      case PredictorKind::OutcomeLag: {
        if (!def.period) {
          v.push_back({"predictor-def", "outcome-lag predictor '" + def.name +
                                            "' missing benchmark period"});
          break;
        }
        if (*def.period < spec.t_start || *def.period >= spec.treatment_period)
          v.push_back({"predictor-period",
                       "predictor period outside [t_start, treatment): " + lbl});
        if (!data.has_series_variable(def.name)) {
          v.push_back({"predictor-unknown",
                       "predictor references unknown variable: " + lbl});
          break;
        }
        require_outcome(def.name, *def.period);
        break;
      }
      case PredictorKind::OutcomeMean: {
        if (!def.from || !def.to || *def.from > *def.to) {
          v.push_back({"predictor-def", "outcome-mean predictor '" + def.name +
                                            "' needs a valid period range"});
          break;
        }
        if (*def.from < spec.t_start || *def.to >= spec.treatment_period)
          v.push_back({"predictor-period",
                       "predictor period outside [t_start, treatment): " + lbl});
        if (!data.has_series_variable(def.name)) {
          v.push_back({"predictor-unknown",
                       "predictor references unknown variable: " + lbl});
          break;
        }
        require_outcome(def.name, *def.to);
        break;
      }
      case PredictorKind::Covariate: {
        const bool is_static = data.has_static_variable(def.name);
        const bool is_series = data.has_series_variable(def.name);
        if (!is_static && !is_series) {
          v.push_back({"predictor-unknown",
                       "predictor references unknown variable: " + lbl});
          break;
        }
        const int lo = def.from.value_or(spec.t_start);
        const int hi = def.to.value_or(spec.treatment_period - 1);
        if ((def.from || def.to) &&
            (lo > hi || lo < spec.t_start || hi >= spec.treatment_period))
          v.push_back({"predictor-period",
                       "predictor period outside [t_start, treatment): " + lbl});
        for (const auto& u : all_units) {
          if (data.has_static(u, def.name)) continue;
          if (!is_series) {
            v.push_back({"missing-predictor-data",
                         "missing covariate " + def.name + " for unit " + u});
            continue;
          }
          // Must be resolvable both over the declared range and over the
          // clamped training window (mean over available years).
          bool any_declared = false, any_training = false;
          for (int p : data.periods_in(spec.t_start, hi)) {
            if (data.has_value(u, def.name, p)) {
              if (p >= lo) any_declared = true;
              if (p <= spec.training_end) any_training = true;
            }
          }
          if (!any_declared || !any_training)
            v.push_back({"missing-predictor-data",
                         "missing covariate " + def.name + " for unit " + u});
        }
        break;
      }
    }
  }

  for (const auto& [name, hi] : outcome_needed_until) {
    if (name == spec.outcome) continue;  // already balanced over the window
    check_outcome_balance(data, spec, name, spec.t_start, hi, v);
  }

  {
    const auto& inf = spec.inference;
    auto bad = [](const std::optional<double>& r) {
      return r && (!std::isfinite(*r) || *r <= 0.0);
    };
    if (bad(inf.mspe_inclusion_ratio) || bad(inf.mspe_discard_ratio))
      v.push_back({"inference-settings", "MSPE ratios must be positive"});
    else if (inf.mspe_inclusion_ratio && inf.mspe_discard_ratio &&
             *inf.mspe_inclusion_ratio > *inf.mspe_discard_ratio)
      v.push_back({"inference-settings",
                   "mspe_inclusion_ratio must not exceed mspe_discard_ratio"});
  }

  return report;
}

// ---------------------------------------------------------------------------
// Predictor matrices
// ---------------------------------------------------------------------------

namespace {

class WarningSink {
 public:
  explicit WarningSink(std::vector<std::string>& out) : out_(out) {}
  void add(const std::string& msg) {
    if (seen_.insert(msg).second) out_.push_back(msg);
  }

 private:
  std::vector<std::string>& out_;
  std::set<std::string> seen_;
};

std::optional<int> latest_period_at_or_before(const PanelDataset& data,
                                              int bound, int floor) {
  std::optional<int> best;
  for (int p : data.periods_in(floor, bound)) best = p;
  return best;
}

double resolve_predictor(const PanelDataset& data, const StudySpec& spec,
                         const PredictorDef& def, const std::string& unit,
                         int window_end, WarningSink& warn) {
  switch (def.kind) {
    case PredictorKind::Covariate: {
      if (const auto s = data.maybe_static(unit, def.name)) return *s;
      const int declared_lo = def.from.value_or(spec.t_start);
      const int declared_hi = def.to.value_or(spec.treatment_period - 1);
      const int hi = std::min(declared_hi, window_end);
      const int lo = std::min(declared_lo, hi);
      double sum = 0.0;
      int n = 0, total = 0;
      for (int p : data.periods_in(lo, hi)) {
        ++total;
        if (const auto x = data.maybe_value(unit, def.name, p)) {
          sum += *x;
          ++n;
        }
      }
      if (n == 0) {
        // Clamped window fell below the declared range; widen to t_start.
        for (int p : data.periods_in(spec.t_start, hi)) {
          if (const auto x = data.maybe_value(unit, def.name, p)) {
            sum += *x;
            ++n;
          }
        }
        if (n > 0)
          warn.add("predictor " + def.label() + ": range clamped to [" +
                   std::to_string(spec.t_start) + ", " + std::to_string(hi) +
                   "] for unit " + unit);
      }
      if (n == 0)
        throw PanelError("missing covariate " + def.name + " for unit " +
                         unit);
      if (n < total)
        warn.add("predictor " + def.label() + ": averaged over " +
                 std::to_string(n) + "/" + std::to_string(total) +
                 " available years for unit " + unit);
      return sum / n;
    }
    case PredictorKind::OutcomeLag: {
      const int p_eff = std::min(*def.period, window_end);
      const auto bench = latest_period_at_or_before(data, p_eff, spec.t_start);
      if (!bench)
        throw PanelError("no dataset period available for predictor " +
                         def.label());
      if (*bench != *def.period)
        warn.add("predictor " + def.label() + ": benchmark clamped to " +
                 std::to_string(*bench));
      return data.value(unit, def.name, *bench);
    }
    case PredictorKind::OutcomeMean: {
      const int hi = std::min(*def.to, window_end);
      const int lo = std::min(*def.from, hi);
      auto periods = data.periods_in(lo, hi);
      if (periods.empty()) {
        const auto bench = latest_period_at_or_before(data, hi, spec.t_start);
        if (!bench)
          throw PanelError("no dataset period available for predictor " +
                           def.label());
        periods = {*bench};
      }
      if (lo != *def.from || hi != *def.to)
        warn.add("predictor " + def.label() + ": range clamped to [" +
                 std::to_string(lo) + ", " + std::to_string(hi) + "]");
      double sum = 0.0;
      for (int p : periods) sum += data.value(unit, def.name, p);
      return sum / static_cast<double>(periods.size());
    }
  }
  throw PanelError("unreachable predictor kind");
}

}  // namespace

PredictorMatrices build_predictor_matrices(const PanelDataset& data,
                                           const StudySpec& spec,
                                           int window_end) {
  const auto k = static_cast<Eigen::Index>(spec.predictors.size());
  const auto j = static_cast<Eigen::Index>(spec.donor_units.size());
  if (k == 0) throw ConfigError("study defines no predictors");

  PredictorMatrices m;
  m.x_treated.resize(k);
  m.x_donors.resize(k, j);
  WarningSink warn(m.warnings);

  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& def = spec.predictors[static_cast<std::size_t>(i)];
    m.predictor_labels.push_back(def.label());
    m.x_treated(i) =
        resolve_predictor(data, spec, def, spec.treated_unit, window_end, warn);
    for (Eigen::Index d = 0; d < j; ++d)
      m.x_donors(i, d) = resolve_predictor(
          data, spec, def, spec.donor_units[static_cast<std::size_t>(d)],
          window_end, warn);
  }

  m.pre_periods = data.periods_in(spec.t_start, spec.treatment_period - 1);
  const auto t = static_cast<Eigen::Index>(m.pre_periods.size());
  m.y_treated_pre.resize(t);
  m.y_donors_pre.resize(t, j);
  for (Eigen::Index r = 0; r < t; ++r) {
    const int p = m.pre_periods[static_cast<std::size_t>(r)];
    m.y_treated_pre(r) = data.value(spec.treated_unit, spec.outcome, p);
    for (Eigen::Index d = 0; d < j; ++d)
      m.y_donors_pre(r, d) =
          data.value(spec.donor_units[static_cast<std::size_t>(d)],
                     spec.outcome, p);
  }
  return m;
}

PredictorMatrices build_predictor_matrices(const PanelDataset& data,
                                           const StudySpec& spec) {
  return build_predictor_matrices(data, spec, spec.treatment_period - 1);
}

Eigen::MatrixXd outcome_matrix(const PanelDataset& data,
                               const std::string& outcome,
                               const std::vector<std::string>& units,
                               const std::vector<int>& periods) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(periods.size()),
                      static_cast<Eigen::Index>(units.size()));
  for (std::size_t r = 0; r < periods.size(); ++r)
    for (std::size_t c = 0; c < units.size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          data.value(units[c], outcome, periods[r]);
  return out;
}

}  // namespace scmkit
