#include "ddup/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace ddup {

namespace {

std::size_t distinct_count(const Table& t, std::size_t c) {
  if (t.schema()[c].is_categorical()) return t.schema()[c].categories.size();
  return std::set<double>(t.reals(c).begin(), t.reals(c).end()).size();
}

}  // namespace

std::vector<Query> generate_workload(const Table& t, std::size_t n, const WorkloadConfig& cfg, std::uint64_t seed) {
  if (n < 1) throw Error("workload: need at least one query");
  if (t.empty()) throw Error("workload: empty table");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> anchor(0, t.row_count() - 1);
  const std::size_t d = t.column_count();
  std::vector<std::size_t> distinct(d);
  for (std::size_t c = 0; c < d; ++c) distinct[c] = distinct_count(t, c);

  std::size_t xc = 0, yc = 0;
  if (cfg.style == WorkloadStyle::dbest) {
    xc = t.schema().index_of(cfg.x_column);
    yc = t.schema().index_of(cfg.y_column);
    if (!t.schema()[xc].is_categorical() || t.schema()[yc].is_categorical())
      throw Error("workload: dbest style needs a categorical x and a numeric y");
  } else {
    if (cfg.min_filters < 1 || cfg.max_filters < cfg.min_filters) throw Error("workload: invalid filter range");
  }

  std::vector<Query> out;
  const std::size_t budget = n * static_cast<std::size_t>(std::max(1, cfg.max_attempts_per_query));
  for (std::size_t attempt = 0; out.size() < n; ++attempt) {
    if (attempt >= budget)
      throw Error("workload: could not generate " + std::to_string(n) + " queries with nonzero answers");
    const std::size_t r = anchor(rng);
    Query q;
    if (cfg.style == WorkloadStyle::naru) {
      const int hi = std::min<int>(cfg.max_filters, static_cast<int>(d));
      const int lo = std::min(cfg.min_filters, hi);
      const int f = std::uniform_int_distribution<int>(lo, hi)(rng);
      std::vector<std::size_t> cols(d);
      std::iota(cols.begin(), cols.end(), 0);
      std::shuffle(cols.begin(), cols.end(), rng);
      cols.resize(static_cast<std::size_t>(f));
      std::sort(cols.begin(), cols.end());
      for (auto c : cols) {
        Op op = Op::eq;
        if (distinct[c] >= static_cast<std::size_t>(cfg.equality_only_below))
          op = static_cast<Op>(std::uniform_int_distribution<int>(0, 2)(rng));
        q.filters.push_back({c, op, t.value(r, c)});
      }
    } else {
      const auto& spec = t.schema()[yc];
      const double y = t.value(r, yc);
      std::uniform_real_distribution<double> width(0.05, 0.5);
      const double half = 0.5 * width(rng) * (spec.max - spec.min);
      q.filters.push_back({xc, Op::eq, t.value(r, xc)});
      q.filters.push_back({yc, Op::ge, std::max(spec.min, y - half)});
      q.filters.push_back({yc, Op::le, std::min(spec.max, y + half)});
      q.agg = cfg.agg;
      if (cfg.agg != Agg::count) q.agg_column = yc;
    }
    if (cfg.style == WorkloadStyle::dbest && q.agg != Agg::count) q.agg_column = yc;
    // an anchor row always matches, but SUM may still be zero
    if (ground_truth(t, q) == 0.0) continue;
    out.push_back(std::move(q));
  }
  return out;
}

double ground_truth(const Table& t, const Query& q) {
  q.validate(t.schema());
  double count = 0.0, sum = 0.0;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    if (!q.matches(t, r)) continue;
    count += 1.0;
    if (q.agg_column) sum += t.value(r, *q.agg_column);
  }
  switch (q.agg) {
    case Agg::count: return count;
    case Agg::sum: return sum;
    case Agg::avg: return count > 0.0 ? sum / count : 0.0;
  }
  return 0.0;
}

std::vector<double> ground_truths(const Table& t, const std::vector<Query>& workload) {
  std::vector<double> out;
  out.reserve(workload.size());
  for (const auto& q : workload) out.push_back(ground_truth(t, q));
  return out;
}

double q_error(double pred, double truth, bool* clamped) {
  if (!(truth > 0.0)) throw Error("q_error: true answer must be positive");
  const bool clamp = !(pred > 0.0);
  if (clamped) *clamped = clamp;
  if (clamp) pred = 1.0;
  return std::max(pred, truth) / std::min(pred, truth);
}

double relative_error(double pred, double truth) {
  if (truth == 0.0) throw Error("relative_error: true answer is zero");
  return std::abs(pred - truth) / std::abs(truth) * 100.0;
}

nlohmann::json Summary::to_json() const {
  return {{"count", count}, {"mean", mean}, {"median", median}, {"p95", p95}, {"p99", p99}, {"max", max}};
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(v.size() - 1, lo + 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Summary summarize(const std::vector<double>& e) {
  Summary s;
  s.count = e.size();
  if (e.empty()) {
    s.mean = s.median = s.p95 = s.p99 = s.max = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.mean = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
  s.median = percentile(e, 50.0);
  s.p95 = percentile(e, 95.0);
  s.p99 = percentile(e, 99.0);
  s.max = *std::max_element(e.begin(), e.end());
  return s;
}

nlohmann::json MetricsReport::to_json() const {
  return {{"all", all.to_json()}, {"fixed", fixed.to_json()}, {"changed", changed.to_json()}};
}

MetricsReport transfer_metrics(const std::vector<Query>& workload, std::span<const double> truths_t,
                               std::span<const double> truths_prev, std::span<const double> estimates,
                               ErrorKind kind) {
  const auto n = workload.size();
  if (truths_t.size() != n || truths_prev.size() != n || estimates.size() != n)
    throw Error("transfer_metrics: one truth, previous truth and estimate per query required");
  MetricsReport rep;
  std::vector<double> all, fixed, changed;
  for (std::size_t i = 0; i < n; ++i) {
    QueryRecord rec{i, truths_t[i], estimates[i], 0.0, truths_t[i] - truths_prev[i]};
    rec.error = kind == ErrorKind::q_error ? q_error(rec.estimate, rec.truth) : relative_error(rec.estimate, rec.truth);
    all.push_back(rec.error);
    (rec.diff == 0.0 ? fixed : changed).push_back(rec.error);
    rep.per_query.push_back(rec);
  }
  rep.all = summarize(all);
  rep.fixed = summarize(fixed);
  rep.changed = summarize(changed);
  return rep;
}

void write_workload(const std::string& path, const std::vector<Query>& workload, const Schema& schema) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write workload '" + path + "'");
  for (std::size_t i = 0; i < workload.size(); ++i) {
    auto j = workload[i].to_json(schema);
    j["id"] = i;
    out << j.dump() << '\n';
  }
}

std::vector<Query> read_workload(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open workload '" + path + "'");
  std::vector<Query> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(Query::from_json(nlohmann::json::parse(line), schema));
    } catch (const nlohmann::json::exception& e) {
      throw Error("workload line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ddup
