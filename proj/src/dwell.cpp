#include "locker/dwell.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include <fmt/format.h>

namespace locker {

std::array<double, kDwellFeatureCount> DwellFeatureRow::to_features() const {
  return {avg_dwell,
          min_dwell,
          max_dwell,
          static_cast<double>(ship_option),
          static_cast<double>(delivery_dow),
          static_cast<double>(delivery_dom)};
}

void DwellFeatureRow::validate() const {
  if (min_dwell < 0.0 || min_dwell > avg_dwell + 1e-12 || avg_dwell > max_dwell + 1e-12 ||
      max_dwell > kMaxDwell || ship_option < 1 || delivery_dow < 0 || delivery_dow > 6 ||
      delivery_dom < 1 || delivery_dom > 31) {
    fail(ErrorKind::Data, "dwell feature row out of range");
  }
}

DwellPmf DwellPmf::point(int dwell) {
  if (dwell < 0 || dwell > kMaxDwell) fail(ErrorKind::Data, fmt::format("dwell {} outside 0..6", dwell));
  DwellPmf pmf;
  pmf.probs[dwell] = 1.0;
  return pmf;
}

DwellPmf DwellPmf::uniform() {
  DwellPmf pmf;
  pmf.probs.fill(1.0 / kDwellClasses);
  return pmf;
}

double DwellPmf::tail(int lag) const {
  if (lag <= 0) return 1.0;
  if (lag > kMaxDwell) return 0.0;
  double sum = 0.0;
  for (int k = kMaxDwell; k >= lag; --k) sum += probs[k];
  return std::clamp(sum, 0.0, 1.0);
}

void DwellPmf::validate() const {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::Data, "dwell pmf entry outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::Data, fmt::format("dwell pmf sums to {}", sum));
}

PresenceMatrix::PresenceMatrix(int option_count, int horizon)
    : options_(option_count), horizon_(horizon) {
  if (option_count < 1 || horizon < 1) fail(ErrorKind::InvalidConfig, "presence matrix needs S, T >= 1");
  values_.assign(static_cast<std::size_t>(options_) * (horizon_ + kCarryoverDays) * horizon_, 0.0);
}

std::size_t PresenceMatrix::index(int s, int v, int t) const {
  if (s < 0 || s >= options_ || v < -kMaxDwell || v > horizon_ || t < 1 || t > horizon_) {
    fail(ErrorKind::Data, fmt::format("presence index (s={}, v={}, t={}) out of range", s, v, t));
  }
  return (static_cast<std::size_t>(s) * (horizon_ + kCarryoverDays) + (v + kMaxDwell)) * horizon_ + (t - 1);
}

double PresenceMatrix::at(int s, int v, int t) const {
  if (t < v || t - v > kMaxDwell) return 0.0;
  return values_[index(s, v, t)];
}

void PresenceMatrix::set(int s, int v, int t, double p) { values_[index(s, v, t)] = p; }

void PresenceMatrix::validate() const {
  for (int s = 0; s < options_; ++s) {
    for (int v = -kMaxDwell; v <= horizon_; ++v) {
      double prev = 1.0;
      for (int t = std::max(1, v); t <= horizon_; ++t) {
        const double p = values_[index(s, v, t)];
        if (t == v && p != 1.0) fail(ErrorKind::Data, fmt::format("p(s={}, v={}, t=v) = {} != 1", s, v, p));
        if (p < 0.0 || p > 1.0 || p > prev) {
          fail(ErrorKind::Data, fmt::format("presence p(s={}, v={}, t={}) = {} is not a valid decay", s, v, t, p));
        }
        if (t - v > kMaxDwell && p != 0.0) {
          fail(ErrorKind::Data, fmt::format("presence p(s={}, v={}, t={}) nonzero past lag 6", s, v, t));
        }
        prev = p;
      }
    }
  }
}

PresenceMatrix pmf_to_presence(const Matrix<DwellPmf>& pmfs, int horizon) {
  if (pmfs.cols() != static_cast<std::size_t>(horizon + kCarryoverDays)) {
    fail(ErrorKind::Data, fmt::format("expected {} pmf columns, got {}", horizon + kCarryoverDays, pmfs.cols()));
  }
  PresenceMatrix presence(static_cast<int>(pmfs.rows()), horizon);
  for (int s = 0; s < presence.option_count(); ++s) {
    for (int v = -kMaxDwell; v <= horizon; ++v) {
      const DwellPmf& q = pmfs(s, v + kMaxDwell);
      q.validate();
      for (int t = std::max(1, v); t <= horizon; ++t) {
        const int lag = t - v;
        presence.set(s, v, t, lag == 0 ? 1.0 : q.tail(lag));
      }
    }
  }
  return presence;
}

PresenceMatrix pmf_to_presence(std::span<const DwellPmf> per_option, int horizon) {
  Matrix<DwellPmf> pmfs(per_option.size(), horizon + kCarryoverDays);
  for (std::size_t s = 0; s < per_option.size(); ++s) {
    std::fill(pmfs.row(s).begin(), pmfs.row(s).end(), per_option[s]);
  }
  return pmf_to_presence(pmfs, horizon);
}

DwellPmf calibrated_pmf(std::span<const double> raw_scores, std::span<const CalibrationMap> maps,
                        const DwellPmf& fallback) {
  if (raw_scores.size() != kDwellClasses || (!maps.empty() && maps.size() != kDwellClasses)) {
    fail(ErrorKind::Data, "calibrated_pmf expects 7 scores and 7 maps");
  }
  DwellPmf pmf;
  double sum = 0.0;
  for (int k = 0; k < kDwellClasses; ++k) {
    const double raw = raw_scores[k];
    if (!(raw >= 0.0 && raw <= 1.0)) fail(ErrorKind::Data, "raw dwell score outside [0,1]");
    pmf.probs[k] = std::clamp(maps.empty() ? raw : maps[k](raw), 0.0, 1.0);
    sum += pmf.probs[k];
  }
  if (sum <= 0.0) return fallback;
  for (double& p : pmf.probs) p /= sum;
  return pmf;
}

DwellHistory DwellHistory::from_events(std::span<const PackageEvent> events, const LockerConfig& config,
                                       std::vector<std::string>* warnings) {
  DwellHistory h;
  h.config_ = config;
  std::vector<Diagnostic> ignored;
  for (const auto& order : collate_orders(events, &ignored)) {
    if (!config.locker_id.empty() && order.locker_id != config.locker_id) continue;
    if (!order.delivery || !order.terminal || order.terminal->day < order.delivery->day) continue;
    int dwell = order.terminal->day - order.delivery->day;
    if (dwell > kMaxDwell) {
      if (warnings != nullptr) {
        warnings->push_back(fmt::format("order '{}' dwell {} clamped to {}", order.order_id, dwell, kMaxDwell));
      }
      dwell = kMaxDwell;
    }
    config.option_index(order.ship_option);
    h.observations_.push_back({order.ship_option, order.delivery->day, order.terminal->day, dwell});
  }
  std::stable_sort(h.observations_.begin(), h.observations_.end(),
                   [](const DwellObservation& a, const DwellObservation& b) {
                     return std::tie(a.delivery_day, a.ship_option, a.terminal_day) <
                            std::tie(b.delivery_day, b.ship_option, b.terminal_day);
                   });
  for (std::size_t i = 0; i < h.observations_.size(); ++i) {
    const auto& o = h.observations_[i];
    h.by_day_[{o.ship_option, o.delivery_day}].push_back(i);
  }
  return h;
}

DwellFeatureRow DwellHistory::features(const Calendar& calendar, int ship_option, int delivery_day,
                                       int as_of) const {
  DwellFeatureRow row;
  row.ship_option = ship_option;
  row.delivery_dow = calendar.day_of_week(delivery_day);
  row.delivery_dom = calendar.day_of_month(delivery_day);
  double sum = 0.0;
  int n = 0;
  int lo = kMaxDwell;
  int hi = 0;
  for (int k = 1; k <= 4; ++k) {
    const auto it = by_day_.find({ship_option, delivery_day - 7 * k});
    if (it == by_day_.end()) continue;
    for (std::size_t i : it->second) {
      const auto& o = observations_[i];
      if (o.terminal_day > as_of) continue;
      sum += o.dwell;
      ++n;
      lo = std::min(lo, o.dwell);
      hi = std::max(hi, o.dwell);
    }
  }
  if (n > 0) {
    row.avg_dwell = sum / n;
    row.min_dwell = lo;
    row.max_dwell = hi;
  }
  return row;
}

int DwellHistory::count_observed(int ship_option, int from_day, int as_of) const {
  int n = 0;
  for (const auto& o : observations_) {
    if (o.ship_option == ship_option && o.delivery_day >= from_day && o.terminal_day <= as_of) ++n;
  }
  return n;
}

void DwellParams::validate() const {
  forest.validate();
  if (folds < 2 || window_days < 1 || sparse_threshold < 0) {
    fail(ErrorKind::InvalidConfig, "invalid dwell model parameters");
  }
}

Forest train_dwell_classifier(std::span<const DwellTrainingRow> rows, const ForestParams& params,
                              std::uint64_t seed, Execution exec) {
  if (rows.empty()) fail(ErrorKind::Training, "cannot train a dwell classifier on an empty training set");
  Matrix<double> x(rows.size(), kDwellFeatureCount);
  std::vector<int> labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto f = rows[i].features.to_features();
    std::copy(f.begin(), f.end(), x.row(i).begin());
    labels[i] = std::clamp(rows[i].dwell, 0, kMaxDwell);
  }
  return Forest::train_classification(x, labels, kDwellClasses, params, seed, exec);
}

DwellPmf smoothed_pmf(std::span<const int> dwells) {
  DwellPmf pmf;
  pmf.probs.fill(1.0);
  for (int d : dwells) pmf.probs[std::clamp(d, 0, kMaxDwell)] += 1.0;
  const double total = static_cast<double>(dwells.size() + kDwellClasses);
  for (double& p : pmf.probs) p /= total;
  return pmf;
}

namespace {

Matrix<double> feature_matrix(std::span<const DwellTrainingRow> rows) {
  Matrix<double> x(rows.size(), kDwellFeatureCount);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto f = rows[i].features.to_features();
    std::copy(f.begin(), f.end(), x.row(i).begin());
  }
  return x;
}

DwellPmf blend(const DwellPmf& model, const DwellPmf& pooled, double w) {
  DwellPmf out;
  double sum = 0.0;
  for (int k = 0; k < kDwellClasses; ++k) {
    out.probs[k] = w * model.probs[k] + (1.0 - w) * pooled.probs[k];
    sum += out.probs[k];
  }
  for (double& p : out.probs) p /= sum;
  return out;
}

}  // namespace

DwellModel DwellModel::train(std::span<const DwellHistory> pool, const Calendar& calendar, int run_date,
                             const DwellParams& params, std::uint64_t seed, Execution exec) {
  params.validate();
  DwellModel model;
  model.params_ = params;
  int options = 0;
  for (const auto& h : pool) options = std::max(options, h.config().option_count());

  std::vector<DwellTrainingRow> rows;
  std::vector<std::vector<int>> dwells_by_option(options);
  const int from_day = run_date - params.window_days + 1;
  for (const auto& h : pool) {
    for (const auto& o : h.observations()) {
      if (o.delivery_day < from_day || o.terminal_day > run_date) continue;
      rows.push_back({h.features(calendar, o.ship_option, o.delivery_day, o.delivery_day - 1), o.dwell});
      dwells_by_option[o.ship_option - 1].push_back(o.dwell);
    }
  }
  for (const auto& d : dwells_by_option) model.pooled_.push_back(smoothed_pmf(d));
  if (rows.empty()) return model;

  model.trained_ = true;
  model.forest_ = train_dwell_classifier(rows, params.forest, seed, exec);

  const std::size_t k = static_cast<std::size_t>(params.folds);
  if (rows.size() < 2 * k) return model;
  std::vector<std::array<double, kDwellClasses>> oof(rows.size());
  for (std::size_t fold = 0; fold < k; ++fold) {
    std::vector<DwellTrainingRow> train_rows;
    std::vector<std::size_t> held_out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i % k == fold) {
        held_out.push_back(i);
      } else {
        train_rows.push_back(rows[i]);
      }
    }
    const Forest f = train_dwell_classifier(train_rows, params.forest, derive_seed(seed, fold + 1), exec);
    std::vector<DwellTrainingRow> held_rows;
    for (std::size_t i : held_out) held_rows.push_back(rows[i]);
    const Matrix<double> scores = f.predict_batch(feature_matrix(held_rows), exec);
    for (std::size_t j = 0; j < held_out.size(); ++j) {
      std::copy(scores.row(j).begin(), scores.row(j).end(), oof[held_out[j]].begin());
    }
  }
  for (int c = 0; c < kDwellClasses; ++c) {
    std::vector<ScoredOutcome> pairs(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      pairs[i] = {oof[i][c], rows[i].dwell == c ? 1.0 : 0.0, 1.0};
    }
    model.maps_[c] = fit_isotonic(pairs);
  }
  return model;
}

DwellPmf DwellModel::pmf(const DwellHistory& locker, const Calendar& calendar, int ship_option,
                         int delivery_day, int run_date) const {
  const int s = locker.config().option_index(ship_option);
  const DwellPmf pooled =
      s < static_cast<int>(pooled_.size()) ? pooled_[s] : DwellPmf::uniform();
  if (!trained_) return pooled;
  const auto row = locker.features(calendar, ship_option, delivery_day, run_date);
  const auto x = row.to_features();
  const auto raw = forest_.predict(x);
  const DwellPmf model = calibrated_pmf(raw, maps_, pooled);
  const int n = locker.count_observed(ship_option, run_date - params_.window_days + 1, run_date);
  if (n >= params_.sparse_threshold) return model;
  return blend(model, pooled, static_cast<double>(n) / params_.sparse_threshold);
}

Matrix<DwellPmf> DwellModel::pmfs(const DwellHistory& locker, const Calendar& calendar, int run_date,
                                  int horizon) const {
  const int options = locker.config().option_count();
  Matrix<DwellPmf> out(options, horizon + kCarryoverDays);
  for (int s = 0; s < options; ++s) {
    const int id = locker.config().ship_options[s].id;
    for (int v = -kMaxDwell; v <= horizon; ++v) {
      out(s, v + kMaxDwell) = pmf(locker, calendar, id, run_date + v, run_date);
    }
    if (params_.per_option_only) {
      DwellPmf mean;
      for (const auto& q : out.row(s)) {
        for (int k = 0; k < kDwellClasses; ++k) mean.probs[k] += q.probs[k] / out.cols();
      }
      const double sum = std::accumulate(mean.probs.begin(), mean.probs.end(), 0.0);
      for (double& p : mean.probs) p /= sum;
      std::fill(out.row(s).begin(), out.row(s).end(), mean);
    }
  }
  return out;
}

PresenceMatrix DwellModel::presence(const DwellHistory& locker, const Calendar& calendar, int run_date,
                                    int horizon) const {
  return pmf_to_presence(pmfs(locker, calendar, run_date, horizon), horizon);
}

void DwellModel::write(std::ostream& out) const {
  out << "locker-dwell-model v1\n";
  out << fmt::format("params {} {} {} {} {} {} {} {}\n", params_.forest.trees, params_.forest.max_depth,
                     params_.forest.min_leaf, params_.forest.features_per_split, params_.folds,
                     params_.window_days, params_.sparse_threshold, params_.per_option_only ? 1 : 0);
  out << "pooled " << pooled_.size() << '\n';
  for (const auto& q : pooled_) {
    for (int k = 0; k < kDwellClasses; ++k) out << fmt::format("{}{:a}", k == 0 ? "" : " ", q.probs[k]);
    out << '\n';
  }
  for (int c = 0; c < kDwellClasses; ++c) {
    out << "class " << c << '\n';
    maps_[c].write(out);
  }
  out << "trained " << (trained_ ? 1 : 0) << '\n';
  if (trained_) forest_.write(out);
}

DwellModel DwellModel::read(std::istream& in) {
  auto expect = [&](const char* word) {
    std::string token;
    if (!(in >> token) || token != word) {
      fail(ErrorKind::Data, fmt::format("dwell model: expected '{}', found '{}'", word, token));
    }
  };
  DwellModel model;
  expect("locker-dwell-model");
  expect("v1");
  expect("params");
  int per_option = 0;
  auto& p = model.params_;
  if (!(in >> p.forest.trees >> p.forest.max_depth >> p.forest.min_leaf >> p.forest.features_per_split >>
        p.folds >> p.window_days >> p.sparse_threshold >> per_option)) {
    fail(ErrorKind::Data, "dwell model: bad params");
  }
  p.per_option_only = per_option != 0;
  expect("pooled");
  std::size_t n = 0;
  if (!(in >> n)) fail(ErrorKind::Data, "dwell model: bad pooled count");
  model.pooled_.resize(n);
  for (auto& q : model.pooled_) {
    for (double& prob : q.probs) {
      std::string token;
      if (!(in >> token)) fail(ErrorKind::Data, "dwell model: truncated pmf");
      prob = std::strtod(token.c_str(), nullptr);
    }
    q.validate();
  }
  for (int c = 0; c < kDwellClasses; ++c) {
    expect("class");
    int id = -1;
    if (!(in >> id) || id != c) fail(ErrorKind::Data, "dwell model: class maps out of order");
    model.maps_[c] = CalibrationMap::read(in);
  }
  expect("trained");
  int trained = 0;
  if (!(in >> trained)) fail(ErrorKind::Data, "dwell model: bad trained flag");
  model.trained_ = trained != 0;
  if (model.trained_) model.forest_ = Forest::read(in);
  return model;
}

std::vector<double> expected_pickups(const Matrix<DwellPmf>& pmfs, const Matrix<double>& deliveries,
                                     int horizon) {
  if (pmfs.rows() != deliveries.rows() || pmfs.cols() != deliveries.cols() ||
      pmfs.cols() != static_cast<std::size_t>(horizon + kCarryoverDays)) {
    fail(ErrorKind::Data, "expected_pickups: pmf and delivery shapes differ");
  }
  std::vector<double> out(horizon, 0.0);
  for (std::size_t s = 0; s < pmfs.rows(); ++s) {
    for (int v = -kMaxDwell; v <= horizon; ++v) {
      const double n = deliveries(s, v + kMaxDwell);
      if (n == 0.0) continue;
      const DwellPmf& q = pmfs(s, v + kMaxDwell);
      for (int t = std::max(1, v); t <= horizon; ++t) {
        const int lag = t - v;
        if (lag <= kMaxDwell) out[t - 1] += n * q.probs[lag];
      }
    }
  }
  return out;
}

Matrix<double> delivery_counts(std::span<const PackageEvent> events, const LockerConfig& config,
                               int run_date, int horizon) {
  Matrix<double> out(config.option_count(), horizon + kCarryoverDays, 0.0);
  for (const auto& ev : events) {
    if (ev.kind != EventKind::Delivery) continue;
    if (!config.locker_id.empty() && ev.locker_id != config.locker_id) continue;
    const int v = ev.day - run_date;
    if (v < -kMaxDwell || v > horizon) continue;
    out(config.option_index(ev.ship_option), v + kMaxDwell) += 1.0;
  }
  return out;
}

std::vector<double> actual_pickups(std::span<const PackageEvent> events, const LockerConfig& config,
                                   int run_date, int horizon) {
  std::vector<double> out(horizon, 0.0);
  std::vector<Diagnostic> ignored;
  for (const auto& order : collate_orders(events, &ignored)) {
    if (!config.locker_id.empty() && order.locker_id != config.locker_id) continue;
    if (!order.delivery || !order.terminal) continue;
    if (order.delivery->day < run_date - kMaxDwell || order.delivery->day > run_date + horizon) continue;
    const int t = order.terminal->day - run_date;
    if (t >= 1 && t <= horizon) out[t - 1] += 1.0;
  }
  return out;
}

double pickup_error_metric(std::span<const double> expected, std::span<const double> actual, int capacity) {
  return mean_capacity_normalized_error(actual, expected, capacity);
}

}  // namespace locker
