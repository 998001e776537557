#include "ddup/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace ddup {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

std::string quote_if_needed(const std::string& s, char delimiter) {
  if (s.find(delimiter) == std::string::npos && s.find('"') == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::vector<std::string> split_delimited(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == delimiter) {
      fields.push_back(trim(std::move(cur)));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(trim(std::move(cur)));
  return fields;
}

LoadResult load_table(const std::string& path, const Schema& schema, char delimiter) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open data file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw Error("data file '" + path + "' has no header row");
  const auto header = split_delimited(line, delimiter);

  // position of each schema column in the file
  std::vector<std::size_t> source(schema.size(), header.size());
  for (std::size_t h = 0; h < header.size(); ++h) {
    auto idx = schema.find(header[h]);
    if (!idx) throw Error("data file '" + path + "': unknown column '" + header[h] + "'");
    source[*idx] = h;
  }
  for (std::size_t c = 0; c < schema.size(); ++c)
    if (source[c] == header.size())
      throw Error("data file '" + path + "': missing column '" + schema[c].name + "'");

  LoadResult result;
  TableBuilder builder(schema);
  std::vector<double> values(schema.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_delimited(line, delimiter);
    if (fields.size() != header.size()) {
      std::ostringstream os;
      os << "data file '" << path << "' row " << line_no << ": expected " << header.size()
         << " fields, found " << fields.size();
      throw Error(os.str());
    }
    std::string reason;
    for (std::size_t c = 0; c < schema.size() && reason.empty(); ++c) {
      const auto& spec = schema[c];
      const auto& text = fields[source[c]];
      if (spec.is_categorical()) {
        auto code = schema.code_of(c, text);
        if (!code)
          reason = "row " + std::to_string(line_no) + ": '" + text + "' not in domain of '" + spec.name + "'";
        else
          values[c] = *code;
      } else {
        double v = 0;
        if (!parse_double(text, v))
          throw Error("data file '" + path + "' row " + std::to_string(line_no) + ", column '" +
                      spec.name + "': cannot parse '" + text + "' as a number");
        if (!(v >= spec.min && v <= spec.max))
          reason = "row " + std::to_string(line_no) + ": " + text + " outside domain of '" + spec.name + "'";
        values[c] = v;
      }
    }
    if (!reason.empty()) {
      ++result.rejected;
      if (result.rejections.size() < 20) result.rejections.push_back(std::move(reason));
      continue;
    }
    builder.append(values);
  }
  result.table = std::move(builder).build();
  return result;
}

void write_table(const std::string& path, const Table& table, char delimiter) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write data file '" + path + "'");
  const auto& schema = table.schema();
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (c) out << delimiter;
    out << quote_if_needed(schema[c].name, delimiter);
  }
  out << '\n';
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (c) out << delimiter;
      out << quote_if_needed(table.cell_text(r, c), delimiter);
    }
    out << '\n';
  }
}

}  // namespace ddup
