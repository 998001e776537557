// Model updates: the combined transfer-set/new-data objective, sequential
// self-distillation, and the detect-then-update pipeline.

#pragma once

#include <optional>

#include "ddup/detector.hpp"
#include "ddup/losses.hpp"
#include "ddup/model.hpp"
#include "ddup/stream.hpp"

namespace ddup {

struct DistillConfig {
  /// Weight of the transfer-set term; unset means |history| / (|history| + |update|).
  std::optional<double> alpha;
  double lambda = 0.5;
  double temperature = 2.0;
  double transfer_fraction = 0.10;
  int epochs = 10;
  int batch_size = 256;
  double lr = 1e-3;
  std::uint64_t seed = 3;
  double early_stop_tol = 1e-3;
  int early_stop_patience = 3;

  void validate() const;
  nlohmann::json to_json() const;
  static DistillConfig from_json(const nlohmann::json& j);
};

/// Candidate distillation weights tried by experiment sweeps.
inline constexpr double kLambdaGrid[] = {0.9, 5.0 / 6.0, 0.25, 0.5};

double resolve_alpha(const DistillConfig& cfg, std::size_t history_rows, std::size_t update_rows);

struct TransferSet {
  Table data;
  int created_at = 0;
};

enum class Branch { none, fine_tune, distill };
std::string_view to_string(Branch b);

struct UpdateOutcome {
  ModelPtr new_model;
  Branch branch = Branch::none;
  double wall_time = 0.0;
  std::vector<double> loss_trace;
};

/// alpha * mean_tr[lambda * L_d + (1 - lambda) * L] + (1 - alpha) * mean_up[L]
/// over the given rows; accumulates the student gradient when `grad` is set.
double total_update_loss(const LearnedModel& teacher, const LearnedModel& student, const Table& tr,
                         std::span<const std::size_t> tr_rows, const Table& up, std::span<const std::size_t> up_rows,
                         double alpha, double lambda, nn::Vec* grad, std::uint64_t noise_seed);

/// The same objective over every row of both tables.
double total_update_loss(const LearnedModel& teacher, const LearnedModel& student, const TransferSet& tr,
                         const Table& up, double alpha, double lambda, std::uint64_t noise_seed = 0);

/// Clones the teacher and trains the clone on the combined objective.
UpdateOutcome distill_update(const LearnedModel& teacher, const TransferSet& tr, const InsertionBatch& up,
                             const DistillConfig& cfg, std::size_t history_rows);

struct PipelineConfig {
  DistillConfig distill;
  TrainConfig train;  // base_lr feeds the in-distribution fine-tune rule
  bool fine_tune_on_ind = true;
  int n_resamples = 1000;
  std::optional<std::size_t> resample_size;  // unset: 1% of the history
  double threshold_mult = 2.0;
  double test_fraction = 0.10;  // share of each batch fed to the online test
  std::size_t history_cap = 200000;
  std::uint64_t seed = 5;

  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
};

struct PipelineState {
  ModelPtr model;
  DetectorState detector;
  Table history;  // sample of everything inserted so far (all of it below the cap)
  std::size_t history_rows = 0;
  TransferSet tr;
  int t = 0;
};

struct StepReport {
  int t = 0;
  Branch branch = Branch::none;
  TestResult test;
  double wall_time = 0.0;
  double detect_time = 0.0;
  std::vector<double> loss_trace;

  nlohmann::json to_json() const;
};

/// Calibrates the detector and draws the first transfer set for a model trained on `base`.
PipelineState start_pipeline(ModelPtr trained, const Table& base, const PipelineConfig& cfg);

/// Detect, update (fine-tune or distill), then refresh history, transfer set and calibration.
StepReport pipeline_step(PipelineState& state, const InsertionBatch& batch, const PipelineConfig& cfg);

}  // namespace ddup
