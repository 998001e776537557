// Seeded data generators used by the experiments and tests.

#pragma once

#include <cstdint>
#include <vector>

#include "ddup/table.hpp"

namespace ddup::datasets {

/// 13-column census-style schema (adult-income layout, with income as the
/// classification target).
Schema census_schema();

/// Census-style rows drawn from a hand-built Bayesian network over the
/// census_schema() columns. Default size matches the public census file.
Table make_census_like(std::size_t rows = 48842, std::uint64_t seed = 7);

/// One categorical attribute x with `categories` values and a numeric y drawn
/// from an equal-weight Gaussian mixture per category.
struct MogSpec {
  int categories = 10;
  int rows_per_category = 1000;
  std::vector<double> means{-8.0, -4.0, 0.0, 4.0, 8.0};
  double stddev = 0.5;
  double category_shift = 0.1;  // category code c shifts every mean by c * shift
  double y_min = -12.0;
  double y_max = 12.0;
};

MogSpec mog_base();     // five peaks
MogSpec mog_shifted();  // two new peaks inside the same domain

Schema mog_schema(const MogSpec& spec);
Table make_mog(const MogSpec& spec, std::uint64_t seed);

/// Peak locations of `spec` for category code `category` (0-based).
std::vector<double> mog_peaks(const MogSpec& spec, int category);

}  // namespace ddup::datasets
