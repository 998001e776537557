#include "ddup/stream.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "ddup/csv.hpp"

namespace ddup {

namespace {

std::vector<std::size_t> selected_columns(const Schema& schema, const std::vector<std::string>& names) {
  std::vector<std::size_t> cols;
  if (names.empty()) {
    for (std::size_t c = 0; c < schema.size(); ++c) cols.push_back(c);
  } else {
    for (const auto& n : names) cols.push_back(schema.index_of(n));
  }
  return cols;
}

}  // namespace

SamplePair draw_sample_pair(const Table& history, const Table& batch, std::size_t n_old,
                            std::size_t n_new, std::uint64_t seed) {
  if (history.empty() || batch.empty()) throw Error("sample pair: both tables must be nonempty");
  if (!(history.schema() == batch.schema())) throw Error("sample pair: schema mismatch");
  n_old = std::max<std::size_t>(1, std::min(n_old, history.row_count()));
  n_new = std::max<std::size_t>(1, std::min(n_new, batch.row_count()));
  return {sample_rows(history, n_old, seed), sample_rows(batch, n_new, seed ^ 0x9e3779b97f4a7c15ULL)};
}

Table sort_columns(const Table& t, const std::vector<std::string>& columns) {
  const auto cols = selected_columns(t.schema(), columns);
  std::vector<Column> out;
  for (std::size_t c = 0; c < t.column_count(); ++c) out.push_back(t.column(c));
  for (auto c : cols) {
    if (t.schema()[c].is_categorical()) {
      std::vector<std::int32_t> v(t.codes(c).begin(), t.codes(c).end());
      std::sort(v.begin(), v.end());
      out[c] = Column::of_codes(std::move(v));
    } else {
      std::vector<double> v(t.reals(c).begin(), t.reals(c).end());
      std::sort(v.begin(), v.end());
      out[c] = Column::of_reals(std::move(v));
    }
  }
  return Table(t.schema(), std::move(out));
}

Table synthesize_drift(const Table& t, const std::vector<std::string>& columns, std::uint64_t seed) {
  const Table sorted = sort_columns(t, columns);
  const auto perm = seeded_permutation(sorted.row_count(), seed);
  return sorted.take(perm);
}

std::vector<InsertionBatch> make_update_stream(const Table& base, double fraction, int n_batches,
                                               bool drift, std::uint64_t seed,
                                               const std::vector<std::string>& drift_columns) {
  if (base.empty()) throw Error("update stream: empty base table");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("update stream: fraction must be in (0, 1]");
  if (n_batches < 1) throw Error("update stream: need at least one batch");
  const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(base.row_count())));
  if (total < static_cast<std::size_t>(n_batches))
    throw Error("update stream: fraction * rows is smaller than the batch count");

  const Table source = drift ? synthesize_drift(base, drift_columns, seed) : base;
  auto perm = seeded_permutation(source.row_count(), seed + 1);
  perm.resize(total);

  std::vector<InsertionBatch> stream;
  const std::size_t per = total / n_batches;
  const std::size_t extra = total % n_batches;
  std::size_t offset = 0;
  for (int b = 0; b < n_batches; ++b) {
    const std::size_t n = per + (static_cast<std::size_t>(b) < extra ? 1 : 0);
    std::vector<std::size_t> idx(perm.begin() + offset, perm.begin() + offset + n);
    offset += n;
    stream.push_back({b + 1, source.take(idx), Provenance::raw});
  }
  return stream;
}

void write_stream(const std::string& dir, const std::vector<InsertionBatch>& stream) {
  std::filesystem::create_directories(dir);
  nlohmann::json batches = nlohmann::json::array();
  for (const auto& b : stream) {
    const std::string file = "batch_" + std::to_string(b.t) + ".csv";
    write_table((std::filesystem::path(dir) / file).string(), b.data);
    batches.push_back({{"t", b.t},
                       {"file", file},
                       {"rows", b.data.row_count()},
                       {"provenance", b.provenance == Provenance::raw ? "raw" : "join-delta"}});
  }
  nlohmann::json manifest{{"format", "ddup-stream"}, {"version", 1}, {"batches", batches}};
  if (!stream.empty()) manifest["schema"] = stream.front().data.schema().to_json();
  std::ofstream out(std::filesystem::path(dir) / "manifest.json");
  out << manifest.dump(2) << '\n';
}

std::vector<InsertionBatch> read_stream(const std::string& manifest_path, const Schema& schema) {
  std::ifstream in(manifest_path);
  if (!in) throw Error("cannot open stream manifest '" + manifest_path + "'");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error("stream manifest '" + manifest_path + "': " + e.what());
  }
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  std::vector<InsertionBatch> stream;
  int last_t = 0;
  for (const auto& b : manifest.at("batches")) {
    InsertionBatch batch;
    batch.t = b.at("t").get<int>();
    if (batch.t <= last_t) throw Error("stream manifest: timesteps must strictly increase");
    last_t = batch.t;
    batch.provenance = b.value("provenance", std::string("raw")) == "raw" ? Provenance::raw : Provenance::join_delta;
    batch.data = load_table((dir / b.at("file").get<std::string>()).string(), schema).table;
    stream.push_back(std::move(batch));
  }
  return stream;
}

Table materialize_join_delta(const Table& joined_old, const std::vector<Table>& dim_tables,
                             const Table& fact_delta, const std::vector<JoinKey>& join_keys) {
  const Schema& out_schema = joined_old.schema();

  struct Source {
    int table;  // -1 = fact, otherwise dimension index
    std::size_t column;
  };
  std::vector<Source> sources;
  for (const auto& spec : out_schema.columns()) {
    std::optional<Source> src;
    if (auto c = fact_delta.schema().find(spec.name)) src = Source{-1, *c};
    for (std::size_t d = 0; !src && d < dim_tables.size(); ++d)
      if (auto c = dim_tables[d].schema().find(spec.name)) src = Source{static_cast<int>(d), *c};
    if (!src) throw Error("join delta: schema mismatch, no input provides column '" + spec.name + "'");
    const Table& t = src->table < 0 ? fact_delta : dim_tables[src->table];
    if (t.schema()[src->column].kind != spec.kind)
      throw Error("join delta: schema mismatch, column '" + spec.name + "' changes kind");
    sources.push_back(*src);
  }

  struct Edge {
    std::size_t fact_col, dim, dim_col;
    std::unordered_map<std::string, std::vector<std::size_t>> index;
  };
  std::vector<Edge> edges;
  for (const auto& k : join_keys) {
    if (k.dim >= dim_tables.size()) throw Error("join delta: key mismatch, no dimension table " + std::to_string(k.dim));
    auto fc = fact_delta.schema().find(k.fact_key);
    auto dc = dim_tables[k.dim].schema().find(k.dim_key);
    if (!fc || !dc) throw Error("join delta: key mismatch on '" + k.fact_key + "' = '" + k.dim_key + "'");
    Edge e{*fc, k.dim, *dc, {}};
    const Table& dim = dim_tables[k.dim];
    for (std::size_t r = 0; r < dim.row_count(); ++r) e.index[dim.cell_text(r, e.dim_col)].push_back(r);
    edges.push_back(std::move(e));
  }

  TableBuilder builder(out_schema);
  std::vector<double> values(out_schema.size());
  std::vector<std::size_t> chosen(dim_tables.size(), 0);

  auto emit = [&](std::size_t fact_row) {
    for (std::size_t c = 0; c < out_schema.size(); ++c) {
      const auto& src = sources[c];
      const Table& t = src.table < 0 ? fact_delta : dim_tables[src.table];
      const std::size_t r = src.table < 0 ? fact_row : chosen[src.table];
      if (out_schema[c].is_categorical()) {
        auto code = out_schema.code_of(c, t.cell_text(r, src.column));
        if (!code) throw Error("join delta: value outside the joined domain in '" + out_schema[c].name + "'");
        values[c] = *code;
      } else {
        values[c] = t.value(r, src.column);
      }
    }
    builder.append(values);
  };

  // depth-first over edges; each edge may match several dimension rows
  for (std::size_t r = 0; r < fact_delta.row_count(); ++r) {
    auto recurse = [&](auto&& self, std::size_t e) -> void {
      if (e == edges.size()) {
        emit(r);
        return;
      }
      auto it = edges[e].index.find(fact_delta.cell_text(r, edges[e].fact_col));
      if (it == edges[e].index.end()) return;
      for (auto dim_row : it->second) {
        chosen[edges[e].dim] = dim_row;
        self(self, e + 1);
      }
    };
    recurse(recurse, 0);
  }
  return std::move(builder).build();
}

}  // namespace ddup
