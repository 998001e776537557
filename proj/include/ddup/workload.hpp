// Query workloads, exact answers and error metrics.

#pragma once

#include <string>
#include <vector>

#include "ddup/query.hpp"

namespace ddup {

enum class WorkloadStyle { naru, dbest };

struct WorkloadConfig {
  WorkloadStyle style = WorkloadStyle::naru;
  int min_filters = 5;  // naru style
  int max_filters = 12;
  int equality_only_below = 10;  // columns with fewer distinct values only get '='
  std::string x_column;          // dbest style: equality column
  std::string y_column;          // dbest style: range / aggregate column
  Agg agg = Agg::count;
  int max_attempts_per_query = 100;
};

/// Queries with a nonzero exact answer on `t`; throws if `n` cannot be reached.
std::vector<Query> generate_workload(const Table& t, std::size_t n, const WorkloadConfig& cfg, std::uint64_t seed);

/// Exact answer by a full scan. AVG over an empty selection is 0.
double ground_truth(const Table& t, const Query& q);
std::vector<double> ground_truths(const Table& t, const std::vector<Query>& workload);

/// max(pred, truth) / min(pred, truth); a nonpositive prediction is clamped to 1 and flagged.
double q_error(double pred, double truth, bool* clamped = nullptr);
/// |pred - truth| / |truth| in percent.
double relative_error(double pred, double truth);

struct Summary {
  std::size_t count = 0;
  double mean = 0.0, median = 0.0, p95 = 0.0, p99 = 0.0, max = 0.0;

  nlohmann::json to_json() const;
};

/// Linear-interpolated percentile, q in [0, 100].
double percentile(std::vector<double> values, double q);
Summary summarize(const std::vector<double>& errors);

enum class ErrorKind { q_error, relative };

struct QueryRecord {
  std::size_t id = 0;
  double truth = 0.0;
  double estimate = 0.0;
  double error = 0.0;
  double diff = 0.0;  // truth now minus truth before the latest insert
};

struct MetricsReport {
  std::vector<QueryRecord> per_query;
  Summary all;      // AT
  Summary fixed;    // BWT: queries whose answer did not change
  Summary changed;  // FWT: queries whose answer changed

  nlohmann::json to_json() const;
};

MetricsReport transfer_metrics(const std::vector<Query>& workload, std::span<const double> truths_t,
                               std::span<const double> truths_prev, std::span<const double> estimates,
                               ErrorKind kind = ErrorKind::q_error);

void write_workload(const std::string& path, const std::vector<Query>& workload, const Schema& schema);
std::vector<Query> read_workload(const std::string& path, const Schema& schema);

}  // namespace ddup
