#include "ddup/table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace ddup {

std::string_view to_string(ColumnKind kind) {
  return kind == ColumnKind::categorical ? "categorical" : "numeric";
}

ColumnSpec ColumnSpec::categorical(std::string name, std::vector<std::string> categories) {
  ColumnSpec c;
  c.name = std::move(name);
  c.kind = ColumnKind::categorical;
  c.categories = std::move(categories);
  return c;
}

ColumnSpec ColumnSpec::numeric(std::string name, double min, double max) {
  ColumnSpec c;
  c.name = std::move(name);
  c.kind = ColumnKind::numeric;
  c.min = min;
  c.max = max;
  return c;
}

Schema::Schema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
  std::set<std::string> names;
  for (const auto& c : columns_) {
    if (c.name.empty()) throw Error("schema: empty column name");
    if (!names.insert(c.name).second) throw Error("schema: duplicate column '" + c.name + "'");
    if (c.is_categorical()) {
      if (c.categories.empty())
        throw Error("schema: categorical column '" + c.name + "' has an empty domain");
      std::set<std::string> cats(c.categories.begin(), c.categories.end());
      if (cats.size() != c.categories.size())
        throw Error("schema: categorical column '" + c.name + "' repeats a category");
    } else if (!std::isfinite(c.min) || !std::isfinite(c.max) || c.min > c.max) {
      throw Error("schema: numeric column '" + c.name + "' needs finite min <= max");
    }
  }
}

std::optional<std::size_t> Schema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i)
    if (columns_[i].name == name) return i;
  return std::nullopt;
}

std::size_t Schema::index_of(std::string_view name) const {
  auto i = find(name);
  if (!i) throw Error("unknown column '" + std::string(name) + "'");
  return *i;
}

std::optional<std::int32_t> Schema::code_of(std::size_t column, std::string_view value) const {
  const auto& cats = columns_.at(column).categories;
  for (std::size_t i = 0; i < cats.size(); ++i)
    if (cats[i] == value) return static_cast<std::int32_t>(i);
  return std::nullopt;
}

nlohmann::json Schema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns_) {
    nlohmann::json j{{"name", c.name}, {"kind", std::string(to_string(c.kind))}};
    if (c.is_categorical())
      j["domain"] = c.categories;
    else
      j["domain"] = {c.min, c.max};
    cols.push_back(std::move(j));
  }
  return nlohmann::json{{"columns", cols}};
}

Schema Schema::from_json(const nlohmann::json& doc) {
  const nlohmann::json& cols = doc.is_array() ? doc : doc.at("columns");
  std::vector<ColumnSpec> specs;
  for (const auto& j : cols) {
    const auto name = j.at("name").get<std::string>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "categorical") {
      std::vector<std::string> cats;
      for (const auto& v : j.at("domain")) cats.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      specs.push_back(ColumnSpec::categorical(name, std::move(cats)));
    } else if (kind == "numeric") {
      const auto& d = j.at("domain");
      if (!d.is_array() || d.size() != 2) throw Error("schema: numeric domain of '" + name + "' must be [min, max]");
      specs.push_back(ColumnSpec::numeric(name, d[0].get<double>(), d[1].get<double>()));
    } else {
      throw Error("schema: unknown kind '" + kind + "' for column '" + name + "'");
    }
  }
  return Schema(std::move(specs));
}

Schema Schema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open schema file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error("schema file '" + path + "': " + e.what());
  }
  return from_json(doc);
}

void Schema::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write schema file '" + path + "'");
  out << to_json().dump(2) << '\n';
}

Column Column::of_codes(std::vector<std::int32_t> codes) {
  Column c;
  c.kind_ = ColumnKind::categorical;
  c.codes_ = std::move(codes);
  return c;
}

Column Column::of_reals(std::vector<double> reals) {
  Column c;
  c.kind_ = ColumnKind::numeric;
  c.reals_ = std::move(reals);
  return c;
}

Table::Table(Schema schema) : schema_(std::move(schema)) {
  for (const auto& spec : schema_.columns())
    columns_.push_back(spec.is_categorical() ? Column::of_codes({}) : Column::of_reals({}));
}

Table::Table(Schema schema, std::vector<Column> columns)
    : schema_(std::move(schema)), columns_(std::move(columns)) {
  if (columns_.size() != schema_.size()) throw Error("table: column count does not match schema");
  rows_ = columns_.empty() ? 0 : columns_.front().size();
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const auto& spec = schema_[c];
    const auto& col = columns_[c];
    if (col.kind() != spec.kind) throw Error("table: column '" + spec.name + "' has the wrong kind");
    if (col.size() != rows_) throw Error("table: ragged column '" + spec.name + "'");
    if (spec.is_categorical()) {
      const auto k = static_cast<std::int32_t>(spec.categories.size());
      for (auto v : col.codes())
        if (v < 0 || v >= k) throw Error("table: code out of domain in column '" + spec.name + "'");
    } else {
      for (auto v : col.reals())
        if (!(v >= spec.min && v <= spec.max))
          throw Error("table: value out of domain in column '" + spec.name + "'");
    }
  }
}

std::vector<double> Table::row(std::size_t r) const {
  std::vector<double> out(columns_.size());
  for (std::size_t c = 0; c < columns_.size(); ++c) out[c] = columns_[c].value(r);
  return out;
}

std::string Table::cell_text(std::size_t row, std::size_t col) const {
  const auto& spec = schema_[col];
  if (spec.is_categorical()) return spec.categories[columns_[col].codes()[row]];
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), columns_[col].reals()[row]);
  return std::string(buf, res.ptr);
}

Table Table::take(std::span<const std::size_t> rows) const {
  std::vector<Column> cols;
  cols.reserve(columns_.size());
  for (const auto& col : columns_) {
    if (col.kind() == ColumnKind::categorical) {
      std::vector<std::int32_t> v(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) v[i] = col.codes()[rows[i]];
      cols.push_back(Column::of_codes(std::move(v)));
    } else {
      std::vector<double> v(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) v[i] = col.reals()[rows[i]];
      cols.push_back(Column::of_reals(std::move(v)));
    }
  }
  Table t;
  t.schema_ = schema_;
  t.columns_ = std::move(cols);
  t.rows_ = rows.size();
  return t;
}

Table Table::head(std::size_t n) const {
  std::vector<std::size_t> idx(std::min(n, rows_));
  std::iota(idx.begin(), idx.end(), 0);
  return take(idx);
}

Table Table::concat(const Table& a, const Table& b) {
  if (!(a.schema() == b.schema())) throw Error("concat: schema mismatch");
  std::vector<Column> cols;
  for (std::size_t c = 0; c < a.column_count(); ++c) {
    if (a.column(c).kind() == ColumnKind::categorical) {
      std::vector<std::int32_t> v(a.codes(c).begin(), a.codes(c).end());
      v.insert(v.end(), b.codes(c).begin(), b.codes(c).end());
      cols.push_back(Column::of_codes(std::move(v)));
    } else {
      std::vector<double> v(a.reals(c).begin(), a.reals(c).end());
      v.insert(v.end(), b.reals(c).begin(), b.reals(c).end());
      cols.push_back(Column::of_reals(std::move(v)));
    }
  }
  Table t;
  t.schema_ = a.schema();
  t.columns_ = std::move(cols);
  t.rows_ = a.row_count() + b.row_count();
  return t;
}

TableBuilder::TableBuilder(Schema schema)
    : schema_(std::move(schema)), codes_(schema_.size()), reals_(schema_.size()) {}

void TableBuilder::reserve(std::size_t rows) {
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    if (schema_[c].is_categorical())
      codes_[c].reserve(rows);
    else
      reals_[c].reserve(rows);
  }
}

void TableBuilder::append(std::span<const double> values) {
  if (values.size() != schema_.size()) throw Error("table builder: row width mismatch");
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    if (schema_[c].is_categorical())
      codes_[c].push_back(static_cast<std::int32_t>(std::lround(values[c])));
    else
      reals_[c].push_back(values[c]);
  }
  ++rows_;
}

Table TableBuilder::build() && {
  std::vector<Column> cols;
  for (std::size_t c = 0; c < schema_.size(); ++c)
    cols.push_back(schema_[c].is_categorical() ? Column::of_codes(std::move(codes_[c]))
                                               : Column::of_reals(std::move(reals_[c])));
  return Table(std::move(schema_), std::move(cols));
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

Table sample_rows(const Table& t, std::size_t n, std::uint64_t seed) {
  if (n > t.row_count()) throw Error("sample_rows: sample larger than table");
  auto idx = seeded_permutation(t.row_count(), seed);
  idx.resize(n);
  return t.take(idx);
}

Table bootstrap_rows(const Table& t, std::size_t n, std::uint64_t seed) {
  if (t.empty() && n > 0) throw Error("bootstrap_rows: empty table");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, t.row_count() - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return t.take(idx);
}

}  // namespace ddup
