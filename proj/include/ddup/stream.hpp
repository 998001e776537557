// Insertion timelines: drift synthesis, update streams and join deltas.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddup/table.hpp"

namespace ddup {

enum class Provenance { raw, join_delta };

struct InsertionBatch {
  int t = 1;  // timestep, >= 1 and strictly increasing along a stream
  Table data;
  Provenance provenance = Provenance::raw;
};

/// A sample of the history (everything before t) and one of the batch at t.
struct SamplePair {
  Table s_old;
  Table s_new;
};

SamplePair draw_sample_pair(const Table& history, const Table& batch, std::size_t n_old,
                            std::size_t n_new, std::uint64_t seed);

/// Copies `t`, sorts each selected column independently (which destroys the
/// joint distribution but keeps every marginal), then shuffles rows with one
/// seeded permutation. An empty `columns` selects every column.
Table synthesize_drift(const Table& t, const std::vector<std::string>& columns, std::uint64_t seed);

/// The sorted copy before the row shuffle; exposed for inspection and tests.
Table sort_columns(const Table& t, const std::vector<std::string>& columns);

/// Draws round(fraction * rows) rows without replacement from `base` (or from its
/// drifted copy) and splits them into `n_batches` batches whose sizes differ by at most one.
std::vector<InsertionBatch> make_update_stream(const Table& base, double fraction, int n_batches,
                                               bool drift, std::uint64_t seed,
                                               const std::vector<std::string>& drift_columns = {});

/// Writes batch_<t>.csv files plus manifest.json under `dir`.
void write_stream(const std::string& dir, const std::vector<InsertionBatch>& stream);
std::vector<InsertionBatch> read_stream(const std::string& manifest_path, const Schema& schema);

/// One equi-join edge of a star schema: fact.fact_key = dims[dim].dim_key.
struct JoinKey {
  std::string fact_key;
  std::size_t dim = 0;
  std::string dim_key;
};

/// New rows of a star join after `fact_delta` is appended to the fact table:
/// fact_delta joined with every dimension table, projected onto the schema of
/// `joined_old`. Columns are matched by name (fact first, then dimensions).
Table materialize_join_delta(const Table& joined_old, const std::vector<Table>& dim_tables,
                             const Table& fact_delta, const std::vector<JoinKey>& join_keys);

}  // namespace ddup
