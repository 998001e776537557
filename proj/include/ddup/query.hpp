// Structured aggregate queries: conjunctions of =, >=, <= filters.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ddup/table.hpp"

namespace ddup {

enum class Op { eq, ge, le };
enum class Agg { count, sum, avg };

std::string_view to_string(Op op);
std::string_view to_string(Agg agg);

struct Filter {
  std::size_t column = 0;
  Op op = Op::eq;
  double value = 0.0;  // category code for categorical columns

  bool accepts(double v) const {
    switch (op) {
      case Op::eq: return v == value;
      case Op::ge: return v >= value;
      case Op::le: return v <= value;
    }
    return false;
  }
};

struct Query {
  std::vector<Filter> filters;
  Agg agg = Agg::count;
  std::optional<std::size_t> agg_column;

  bool matches(const Table& t, std::size_t row) const;
  /// Throws when a column is filtered twice with the same operator, or SUM/AVG lack a numeric column.
  void validate(const Schema& schema) const;

  /// Columns and categories by name.
  nlohmann::json to_json(const Schema& schema) const;
  static Query from_json(const nlohmann::json& j, const Schema& schema);
};

}  // namespace ddup
