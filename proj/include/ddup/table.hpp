// Columnar tables, schemas and the error type shared by the whole library.
//
// Categorical columns are dictionary encoded: a value is stored as its index
// into the schema's category list. Numeric columns are stored as doubles.
// Tables are immutable once built; every transformation returns a new table.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ddup {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ColumnKind { categorical, numeric };

std::string_view to_string(ColumnKind kind);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<std::string> categories;  // categorical domain, in code order
  double min = 0.0;                     // numeric domain
  double max = 0.0;

  static ColumnSpec categorical(std::string name, std::vector<std::string> categories);
  static ColumnSpec numeric(std::string name, double min, double max);

  bool is_categorical() const { return kind == ColumnKind::categorical; }
  bool operator==(const ColumnSpec&) const = default;
};

class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<ColumnSpec> columns);

  std::size_t size() const { return columns_.size(); }
  const ColumnSpec& operator[](std::size_t i) const { return columns_[i]; }
  const std::vector<ColumnSpec>& columns() const { return columns_; }

  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;  // throws on unknown column

  /// Code of `value` in a categorical column, or nullopt when outside the domain.
  std::optional<std::int32_t> code_of(std::size_t column, std::string_view value) const;

  nlohmann::json to_json() const;
  static Schema from_json(const nlohmann::json& doc);
  static Schema load(const std::string& path);
  void save(const std::string& path) const;

  bool operator==(const Schema&) const = default;

 private:
  std::vector<ColumnSpec> columns_;
};

class Column {
 public:
  Column() = default;
  static Column of_codes(std::vector<std::int32_t> codes);
  static Column of_reals(std::vector<double> reals);

  ColumnKind kind() const { return kind_; }
  std::size_t size() const {
    return kind_ == ColumnKind::categorical ? codes_.size() : reals_.size();
  }
  std::span<const std::int32_t> codes() const { return codes_; }
  std::span<const double> reals() const { return reals_; }
  double value(std::size_t row) const {
    return kind_ == ColumnKind::categorical ? static_cast<double>(codes_[row]) : reals_[row];
  }

 private:
  ColumnKind kind_ = ColumnKind::numeric;
  std::vector<std::int32_t> codes_;
  std::vector<double> reals_;
};

class Table {
 public:
  Table() = default;
  explicit Table(Schema schema);
  /// Validates column kinds, lengths and domain membership.
  Table(Schema schema, std::vector<Column> columns);

  const Schema& schema() const { return schema_; }
  std::size_t row_count() const { return rows_; }
  std::size_t column_count() const { return columns_.size(); }
  bool empty() const { return rows_ == 0; }

  const Column& column(std::size_t i) const { return columns_[i]; }
  std::span<const std::int32_t> codes(std::size_t col) const { return columns_[col].codes(); }
  std::span<const double> reals(std::size_t col) const { return columns_[col].reals(); }
  /// Code (as double) for categorical columns, the real value otherwise.
  double value(std::size_t row, std::size_t col) const { return columns_[col].value(row); }
  std::vector<double> row(std::size_t r) const;
  /// Human readable cell: category label or formatted number.
  std::string cell_text(std::size_t row, std::size_t col) const;

  Table take(std::span<const std::size_t> rows) const;
  Table head(std::size_t n) const;

  static Table concat(const Table& a, const Table& b);

 private:
  Schema schema_;
  std::vector<Column> columns_;
  std::size_t rows_ = 0;
};

/// Row-at-a-time construction; values are codes for categorical columns.
class TableBuilder {
 public:
  explicit TableBuilder(Schema schema);
  void reserve(std::size_t rows);
  void append(std::span<const double> values);
  std::size_t row_count() const { return rows_; }
  Table build() &&;

 private:
  Schema schema_;
  std::vector<std::vector<std::int32_t>> codes_;
  std::vector<std::vector<double>> reals_;
  std::size_t rows_ = 0;
};

/// Indices 0..n-1 in an order drawn from `seed`.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// Uniform sample without replacement (order randomised). Requires n <= t.row_count().
Table sample_rows(const Table& t, std::size_t n, std::uint64_t seed);

/// Uniform sample with replacement.
Table bootstrap_rows(const Table& t, std::size_t n, std::uint64_t seed);

}  // namespace ddup
