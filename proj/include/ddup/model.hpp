// The contract every learned model family implements, plus the generic
// training, fine-tuning, evaluation and checkpoint routines built on it.

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ddup/nn.hpp"
#include "ddup/table.hpp"
#include "json.hpp"

namespace ddup {

enum class TaskTag { aqp, ce, dg };

std::string_view to_string(TaskTag task);

struct TrainConfig {
  int epochs = 20;
  int batch_size = 256;
  double base_lr = 1e-3;
  double weight_penalty = 0.0;  // L2 coefficient
  std::uint64_t seed = 1;
  // stop once the epoch loss improved by less than `early_stop_tol` (relative)
  // over the last `early_stop_patience` epochs
  double early_stop_tol = 1e-3;
  int early_stop_patience = 3;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct LossReport {
  double mean_loss = 0.0;
  std::vector<double> per_example;
};

struct TrainStats {
  std::vector<double> epoch_loss;
  double wall_seconds = 0.0;
  double lr = 0.0;
};

class LearnedModel {
 public:
  virtual ~LearnedModel() = default;

  virtual std::string arch() const = 0;
  virtual TaskTag task() const = 0;
  virtual const Schema& schema() const = 0;
  virtual std::unique_ptr<LearnedModel> clone() const = 0;

  nn::Vec& params() { return params_; }
  const nn::Vec& params() const { return params_; }

  /// Mean training objective over `rows`; accumulates its parameter gradient
  /// into `grad` when non-null. `noise_seed` drives any stochastic term.
  virtual double loss(const Table& data, std::span<const std::size_t> rows, nn::Vec* grad,
                      std::uint64_t noise_seed) const = 0;

  /// Deterministic per-row objective (the detector's signal).
  virtual std::vector<double> per_example_loss(const Table& data) const = 0;

  /// Mean distillation loss of this model (the student) against `teacher`.
  virtual double distill_loss(const LearnedModel& teacher, const Table& data,
                              std::span<const std::size_t> rows, nn::Vec* grad,
                              std::uint64_t noise_seed) const = 0;

  /// Softening temperature for cross-entropy distillation terms (ignored by MSE-only models).
  virtual void set_distill_temperature(double /*t*/) {}

  /// Zeroes gradient entries that must stay fixed while distilling.
  virtual void restrict_update_gradient(nn::Vec& /*grad*/) const {}

  /// Table statistics kept next to the network (frequency tables, cardinality).
  virtual void absorb_metadata(const Table& /*inserted*/) {}
  virtual void reset_metadata(const Table& /*full*/) {}

  /// Architecture, encoders, parameters and metadata.
  virtual nlohmann::json to_json() const = 0;

 protected:
  LearnedModel() = default;
  LearnedModel(const LearnedModel&) = default;
  LearnedModel& operator=(const LearnedModel&) = default;

  nn::Vec params_;
};

using ModelPtr = std::unique_ptr<LearnedModel>;

/// Trains in place on `data` with RMSProp and an L2 penalty, then resets the
/// model's table metadata to `data`.
TrainStats train(LearnedModel& model, const Table& data, const TrainConfig& cfg);

/// Minibatch training at an explicit learning rate (used by fine-tuning and baselines).
TrainStats train_at_lr(LearnedModel& model, const Table& data, const TrainConfig& cfg, double lr,
                       bool early_stop);

LossReport batch_loss(const LearnedModel& model, const Table& data, bool keep_per_example = true);

/// lr_t = new_size / old_size * base_lr.
double fine_tune_lr(double base_lr, std::size_t old_size, std::size_t new_size);

TrainStats fine_tune(LearnedModel& model, const Table& new_data, std::size_t old_size,
                     std::size_t new_size, const TrainConfig& cfg);

ModelPtr clone_model(const LearnedModel& model);

void save_model(const LearnedModel& model, const std::string& path);
ModelPtr load_model(const std::string& path);
ModelPtr model_from_json(const nlohmann::json& doc);

nlohmann::json params_to_json(const nn::Vec& params);
/// Throws when the array is malformed or its length differs from `expected`.
nn::Vec params_from_json(const nlohmann::json& j, std::size_t expected);

/// Deterministic 64-bit seed for one row's stochastic terms.
std::uint64_t row_seed(const Table& data, std::size_t row, std::uint64_t salt);

}  // namespace ddup
