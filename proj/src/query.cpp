#include "ddup/query.hpp"

namespace ddup {

std::string_view to_string(Op op) {
  switch (op) {
    case Op::eq: return "=";
    case Op::ge: return ">=";
    case Op::le: return "<=";
  }
  return "?";
}

std::string_view to_string(Agg agg) {
  switch (agg) {
    case Agg::count: return "COUNT";
    case Agg::sum: return "SUM";
    case Agg::avg: return "AVG";
  }
  return "?";
}

bool Query::matches(const Table& t, std::size_t row) const {
  for (const auto& f : filters)
    if (!f.accepts(t.value(row, f.column))) return false;
  return true;
}

void Query::validate(const Schema& schema) const {
  for (std::size_t i = 0; i < filters.size(); ++i) {
    if (filters[i].column >= schema.size()) throw Error("query: filter column out of range");
    for (std::size_t j = 0; j < i; ++j)
      if (filters[j].column == filters[i].column && filters[j].op == filters[i].op)
        throw Error("query: column '" + schema[filters[i].column].name + "' filtered twice with " +
                    std::string(to_string(filters[i].op)));
  }
  if (agg != Agg::count) {
    if (!agg_column) throw Error("query: SUM/AVG need an aggregate column");
    if (*agg_column >= schema.size() || schema[*agg_column].is_categorical())
      throw Error("query: aggregate column must be numeric");
  }
}

nlohmann::json Query::to_json(const Schema& schema) const {
  nlohmann::json fs = nlohmann::json::array();
  for (const auto& f : filters) {
    const auto& spec = schema[f.column];
    nlohmann::json v;
    if (spec.is_categorical())
      v = spec.categories.at(static_cast<std::size_t>(f.value));
    else
      v = f.value;
    fs.push_back({{"column", spec.name}, {"op", std::string(to_string(f.op))}, {"value", v}});
  }
  nlohmann::json j{{"agg", std::string(to_string(agg))}, {"filters", fs}};
  if (agg_column) j["agg_column"] = schema[*agg_column].name;
  return j;
}

Query Query::from_json(const nlohmann::json& j, const Schema& schema) {
  Query q;
  const auto agg = j.value("agg", std::string("COUNT"));
  if (agg == "COUNT") q.agg = Agg::count;
  else if (agg == "SUM") q.agg = Agg::sum;
  else if (agg == "AVG") q.agg = Agg::avg;
  else throw Error("query: unknown aggregate '" + agg + "'");
  if (j.contains("agg_column")) q.agg_column = schema.index_of(j.at("agg_column").get<std::string>());
  for (const auto& f : j.at("filters")) {
    Filter flt;
    flt.column = schema.index_of(f.at("column").get<std::string>());
    const auto op = f.at("op").get<std::string>();
    if (op == "=") flt.op = Op::eq;
    else if (op == ">=") flt.op = Op::ge;
    else if (op == "<=") flt.op = Op::le;
    else throw Error("query: unknown operator '" + op + "'");
    if (schema[flt.column].is_categorical()) {
      auto code = schema.code_of(flt.column, f.at("value").get<std::string>());
      if (!code) throw Error("query: value outside the domain of '" + schema[flt.column].name + "'");
      flt.value = *code;
    } else {
      flt.value = f.at("value").get<double>();
    }
    q.filters.push_back(flt);
  }
  q.validate(schema);
  return q;
}

}  // namespace ddup
