#include "ddup/detector.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace ddup {

nlohmann::json DetectorState::to_json() const {
  return {{"boot_mean", boot_mean},         {"boot_std", boot_std},
          {"n_resamples", n_resamples},     {"resample_size", resample_size},
          {"threshold_mult", threshold_mult}, {"calibrated_at", calibrated_at}};
}

DetectorState DetectorState::from_json(const nlohmann::json& j) {
  DetectorState s;
  s.boot_mean = j.at("boot_mean").get<double>();
  s.boot_std = j.at("boot_std").get<double>();
  s.n_resamples = j.at("n_resamples").get<int>();
  s.resample_size = j.at("resample_size").get<std::size_t>();
  s.threshold_mult = j.value("threshold_mult", 2.0);
  s.calibrated_at = j.value("calibrated_at", 0);
  if (s.boot_std < 0.0 || s.n_resamples < 1) throw Error("detector state: invalid calibration");
  return s;
}

std::string_view to_string(Decision d) { return d == Decision::ood ? "OOD" : "IND"; }

std::size_t default_resample_size(std::size_t old_rows) {
  return std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(0.01 * static_cast<double>(old_rows))));
}

DetectorState calibrate_from_losses(std::span<const double> losses, int n_resamples, std::size_t resample_size,
                                    std::uint64_t seed, double threshold_mult, int calibrated_at) {
  if (n_resamples < 2) throw Error("offline_calibrate: need at least two resamples");
  if (losses.empty()) throw Error("offline_calibrate: empty old data");
  if (resample_size < 1) throw Error("offline_calibrate: resample size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, losses.size() - 1);
  std::vector<double> means(static_cast<std::size_t>(n_resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < resample_size; ++i) s += losses[pick(rng)];
    m = s / static_cast<double>(resample_size);
  }
  DetectorState st;
  st.boot_mean = std::accumulate(means.begin(), means.end(), 0.0) / n_resamples;
  double var = 0.0;
  for (double m : means) var += (m - st.boot_mean) * (m - st.boot_mean);
  st.boot_std = std::sqrt(var / (n_resamples - 1));
  st.n_resamples = n_resamples;
  st.resample_size = resample_size;
  st.threshold_mult = threshold_mult;
  st.calibrated_at = calibrated_at;
  return st;
}

DetectorState offline_calibrate(const LearnedModel& model, const Table& old_data, int n_resamples,
                                std::size_t resample_size, std::uint64_t seed, double threshold_mult,
                                int calibrated_at) {
  if (n_resamples < 2) throw Error("offline_calibrate: need at least two resamples");
  const auto losses = model.per_example_loss(old_data);
  return calibrate_from_losses(losses, n_resamples, resample_size, seed, threshold_mult, calibrated_at);
}

TestResult test_mean_loss(const DetectorState& state, double new_mean_loss) {
  TestResult r;
  r.old_mean_loss = state.boot_mean;
  r.new_mean_loss = new_mean_loss;
  r.d = new_mean_loss - state.boot_mean;
  r.threshold = state.threshold();
  r.decision = r.d > r.threshold ? Decision::ood : Decision::ind;
  return r;
}

TestResult online_test(const DetectorState& state, const LearnedModel& model, const Table& new_sample) {
  if (new_sample.empty()) throw Error("online_test: empty new sample");
  return test_mean_loss(state, batch_loss(model, new_sample, false).mean_loss);
}

ErrorRates evaluate_rates(const DetectorState& state, const LearnedModel& model, const Table& ind_pool,
                          const Table& ood_pool, std::size_t batch_size, int n_batches, std::uint64_t seed) {
  if (ind_pool.empty() || ood_pool.empty()) throw Error("evaluate_rates: empty pool");
  if (batch_size > ind_pool.row_count() || batch_size > ood_pool.row_count())
    throw Error("evaluate_rates: batch size exceeds the pool size");
  if (n_batches < 1) throw Error("evaluate_rates: need at least one batch");
  // per-row losses once; each batch is then a mean over sampled rows
  const auto ind = model.per_example_loss(ind_pool);
  const auto ood = model.per_example_loss(ood_pool);
  std::mt19937_64 rng(seed);
  auto batch_mean = [&](const std::vector<double>& l) {
    // sample without replacement by partial Fisher-Yates over an index vector
    std::vector<std::size_t> idx(l.size());
    std::iota(idx.begin(), idx.end(), 0);
    double s = 0.0;
    for (std::size_t i = 0; i < batch_size; ++i) {
      std::uniform_int_distribution<std::size_t> u(i, idx.size() - 1);
      std::swap(idx[i], idx[u(rng)]);
      s += l[idx[i]];
    }
    return s / static_cast<double>(batch_size);
  };
  int fp = 0, fn = 0;
  for (int b = 0; b < n_batches; ++b) {
    if (test_mean_loss(state, batch_mean(ind)).decision == Decision::ood) ++fp;
    if (test_mean_loss(state, batch_mean(ood)).decision == Decision::ind) ++fn;
  }
  return {static_cast<double>(fp) / n_batches, static_cast<double>(fn) / n_batches};
}

Table perturbation_pool(const Table& base, const std::vector<std::string>& columns, double fraction,
                        std::uint64_t seed) {
  if (base.empty()) throw Error("perturbation pool: empty base table");
  if (columns.empty()) throw Error("perturbation pool: no columns to perturb");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("perturbation pool: fraction must be in (0, 1]");
  std::vector<std::size_t> idx;
  for (const auto& c : columns) idx.push_back(base.schema().index_of(c));
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * base.row_count())));

  std::vector<Column> cols;
  for (std::size_t c = 0; c < base.column_count(); ++c) cols.push_back(base.column(c));
  Table pool(base.schema());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto perm = seeded_permutation(base.row_count(), seed + 101 * (k + 1));
    const std::size_t c = idx[k];
    if (base.schema()[c].is_categorical()) {
      std::vector<std::int32_t> v(base.row_count());
      for (std::size_t r = 0; r < v.size(); ++r) v[r] = base.codes(c)[perm[r]];
      cols[c] = Column::of_codes(std::move(v));
    } else {
      std::vector<double> v(base.row_count());
      for (std::size_t r = 0; r < v.size(); ++r) v[r] = base.reals(c)[perm[r]];
      cols[c] = Column::of_reals(std::move(v));
    }
    const Table perturbed(base.schema(), cols);
    pool = Table::concat(pool, sample_rows(perturbed, n, seed + 7 * (k + 1)));
  }
  return pool;
}

}  // namespace ddup
