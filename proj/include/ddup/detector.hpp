// Loss-based bootstrap two-sample test: an offline calibration of the
// sampling distribution of the mean loss on old data, and a one-pass online
// test of a new sample against it.

#pragma once

#include "ddup/model.hpp"

namespace ddup {

struct DetectorState {
  double boot_mean = 0.0;
  double boot_std = 0.0;
  int n_resamples = 0;
  std::size_t resample_size = 0;
  double threshold_mult = 2.0;
  int calibrated_at = 0;

  double threshold() const { return threshold_mult * boot_std; }
  nlohmann::json to_json() const;
  static DetectorState from_json(const nlohmann::json& j);
};

enum class Decision { ind, ood };
std::string_view to_string(Decision d);

struct TestResult {
  double d = 0.0;  // mean new loss minus boot_mean; positive when the new data fits worse
  double threshold = 0.0;
  Decision decision = Decision::ind;
  double old_mean_loss = 0.0;
  double new_mean_loss = 0.0;
};

/// Calibration size used when none is configured: a 1% sample of the old data (at least 2 rows).
std::size_t default_resample_size(std::size_t old_rows);

/// Bootstrap distribution of the mean of `losses` (resampled with replacement).
DetectorState calibrate_from_losses(std::span<const double> losses, int n_resamples, std::size_t resample_size,
                                    std::uint64_t seed, double threshold_mult = 2.0, int calibrated_at = 0);

DetectorState offline_calibrate(const LearnedModel& model, const Table& old_data, int n_resamples,
                                std::size_t resample_size, std::uint64_t seed, double threshold_mult = 2.0,
                                int calibrated_at = 0);

/// Decision for an already computed mean loss; ties go to IND.
TestResult test_mean_loss(const DetectorState& state, double new_mean_loss);
TestResult online_test(const DetectorState& state, const LearnedModel& model, const Table& new_sample);

struct ErrorRates {
  double fpr = 0.0;
  double fnr = 0.0;
};

/// Feeds `n_batches` random batches from each pool through online_test.
ErrorRates evaluate_rates(const DetectorState& state, const LearnedModel& model, const Table& ind_pool,
                          const Table& ood_pool, std::size_t batch_size, int n_batches, std::uint64_t seed);

/// Graded out-of-distribution pool: for k = 1..columns.size(), shuffle columns
/// 1..k of `base` independently and append a `fraction` sample of the result.
Table perturbation_pool(const Table& base, const std::vector<std::string>& columns, double fraction,
                        std::uint64_t seed);

}  // namespace ddup
