// End-to-end experiments: train a base model, replay an insertion stream
// under several update policies, score every step and write a run directory.

#pragma once

#include <string>
#include <vector>

#include "ddup/distill.hpp"
#include "ddup/forest.hpp"
#include "ddup/workload.hpp"

namespace ddup {

/// Invalid or inconsistent experiment configuration (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class Family { mdn, darn, tvae };
enum class Policy { ddup, baseline, stale, retrain };

std::string_view to_string(Family f);
std::string_view to_string(Policy p);
Family family_from_string(std::string_view s);
Policy policy_from_string(std::string_view s);

struct DatasetSpec {
  std::string generator;  // "census" or "mog"; empty means csv_path + schema_path
  std::string csv_path;
  std::string schema_path;
  std::size_t rows = 0;  // generator size, 0 for its default
  std::uint64_t seed = 7;
};

struct StreamSpec {
  double fraction = 0.2;
  int n_batches = 1;
  bool drift = true;
  std::vector<std::string> drift_columns;  // empty: every column
};

struct EvalSpec {
  std::size_t n_queries = 2000;
  int ce_samples = 1000;
  std::string target_column = "income";  // tvae fidelity target
  double holdout_fraction = 0.3;         // tvae only
  std::size_t synth_rows = 0;            // 0: as many as the current table
  ForestConfig forest;
  std::size_t loglik_rows = 2000;  // old-data sample for log-likelihood traces
};

struct DetectionSpec {
  bool enabled = false;
  std::vector<std::size_t> batch_sizes{8, 32, 128, 512, 2000};
  int trials = 100;
  std::size_t resample_size = 0;  // 0: 1% of the old data
  int n_resamples = 1000;
  double pool_fraction = 0.1;  // per perturbation level
  std::vector<std::string> columns;  // perturbation order; empty: the first five columns
};

struct ExperimentConfig {
  DatasetSpec dataset;
  Family family = Family::darn;
  nlohmann::json model = nlohmann::json::object();  // family settings (+ x_column / y_column for mdn)
  StreamSpec stream;
  PipelineConfig pipeline;
  std::vector<Policy> policies{Policy::ddup, Policy::baseline, Policy::stale, Policy::retrain};
  double baseline_lr_scale = 0.3;  // baseline fine-tunes at this multiple of base_lr
  EvalSpec eval;
  DetectionSpec detection;
  std::uint64_t seed = 1;
  std::string out_dir = "run";

  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
};

/// Generated or loaded dataset described by `spec`.
Table load_dataset(const DatasetSpec& spec);

/// Untrained model of `family` fitted to `fit_data`'s encoders.
ModelPtr make_model(Family family, const nlohmann::json& settings, const Table& fit_data);

/// Summary of one policy after one step, as written to steps.jsonl.
struct StepRecord {
  std::string policy;
  int t = 0;
  std::string branch;
  std::string decision;  // ddup only
  double d = 0.0, threshold = 0.0;
  double wall_time = 0.0;
  double cpu_time = 0.0;
  double loglik_old = 0.0;  // mean log-likelihood (negative loss) on an old-data sample
  double loglik_new = 0.0;  // ... and on the batch just inserted
  nlohmann::json metrics;   // family specific summaries

  nlohmann::json to_json() const;
  static StepRecord from_json(const nlohmann::json& j);
};

/// Runs every configured policy and returns the run directory.
std::string run_experiment(const ExperimentConfig& cfg);

/// Writes summary.csv, timings.csv and SVG plots into `run_dir`; returns the written paths.
std::vector<std::string> report(const std::string& run_dir);

}  // namespace ddup
