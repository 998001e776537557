#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ddup/table.hpp"

namespace ddup {

struct LoadResult {
  Table table;
  std::size_t rejected = 0;            // rows outside the schema's domains
  std::vector<std::string> rejections;  // first few reasons, for reporting
};

/// Parses a delimiter-separated file with a header row. Every schema column
/// must appear in the header and every header column must be in the schema.
/// Unparseable numbers are errors; out-of-domain rows are rejected and counted.
LoadResult load_table(const std::string& path, const Schema& schema, char delimiter = ',');

void write_table(const std::string& path, const Table& table, char delimiter = ',');

/// Splits one line, honouring double quotes.
std::vector<std::string> split_delimited(const std::string& line, char delimiter);

}  // namespace ddup
