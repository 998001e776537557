// Shared oracles for the test suites: central finite differences and small
// hand-built tables.

#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "ddup/table.hpp"
#include "ddup/nn.hpp"

namespace ddup::testing {

/// Central-difference gradient of f at theta (theta is restored afterwards).
inline nn::Vec numeric_gradient(const std::function<double()>& f, nn::Vec& theta, double h = 1e-5) {
  nn::Vec g(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + h;
    const double up = f();
    theta[i] = keep - h;
    const double down = f();
    theta[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, tiny).
inline double relative_gap(const nn::Vec& a, const nn::Vec& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

/// Adds N(0, sd) noise so gradient checks do not start at a symmetric init.
inline void jitter(nn::Vec& theta, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += n(rng);
}

/// Table built from rows of values (codes for categorical columns).
inline Table table_of(const Schema& schema, const std::vector<std::vector<double>>& rows) {
  TableBuilder b(schema);
  for (const auto& r : rows) b.append(r);
  return std::move(b).build();
}

inline Schema three_cat_schema(int a = 3, int b = 3, int c = 3) {
  auto cats = [](int n, const std::string& p) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back(p + std::to_string(i));
    return v;
  };
  return Schema({ColumnSpec::categorical("a", cats(a, "a")), ColumnSpec::categorical("b", cats(b, "b")),
                 ColumnSpec::categorical("c", cats(c, "c"))});
}

/// Correlated rows over three small categorical columns.
inline Table three_cat_table(std::size_t n, std::uint64_t seed, int a = 3, int b = 3, int c = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ua(0, a - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TableBuilder tb(three_cat_schema(a, b, c));
  for (std::size_t i = 0; i < n; ++i) {
    const int x = ua(rng);
    const int y = u(rng) < 0.7 ? x % b : static_cast<int>(u(rng) * b) % b;
    const int z = u(rng) < 0.6 ? (x + y) % c : static_cast<int>(u(rng) * c) % c;
    const double row[] = {double(x), double(y), double(z)};
    tb.append(row);
  }
  return std::move(tb).build();
}

/// One categorical x and one numeric y in [-3, 3].
inline Table mixed_table(std::size_t n, std::uint64_t seed, int categories = 3) {
  std::vector<std::string> cats;
  for (int i = 0; i < categories; ++i) cats.push_back("k" + std::to_string(i));
  Schema s({ColumnSpec::categorical("x", cats), ColumnSpec::numeric("y", -3.0, 3.0)});
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ux(0, categories - 1);
  std::normal_distribution<double> noise(0.0, 0.4);
  TableBuilder tb(s);
  for (std::size_t i = 0; i < n; ++i) {
    const int x = ux(rng);
    const double y = std::clamp(-1.5 + 1.5 * x + noise(rng), -3.0, 3.0);
    const double row[] = {double(x), y};
    tb.append(row);
  }
  return std::move(tb).build();
}

inline std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace ddup::testing
