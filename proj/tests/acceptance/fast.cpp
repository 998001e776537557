// Criteria that run in seconds: gradients, the bootstrap oracle, MoG detection,
// normalization invariants and exact-oracle agreement on enumerable toys.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "../test_support.hpp"
#include "acceptance.hpp"
#include "ddup/darn.hpp"
#include "ddup/datasets.hpp"
#include "ddup/detector.hpp"
#include "ddup/distill.hpp"
#include "ddup/losses.hpp"
#include "ddup/mdn.hpp"
#include "ddup/tvae.hpp"
#include "ddup/workload.hpp"

namespace ddup::acceptance {
namespace {

using testing::iota_rows;
using testing::jitter;
using testing::numeric_gradient;
using testing::relative_gap;

MdnModel small_mdn(const Table& t) {
  MdnConfig cfg;
  cfg.components = 2;
  cfg.hidden = {4};
  cfg.seed = 3;
  return MdnModel(t.schema(), "x", "y", cfg);
}

DarnModel small_darn(const Table& t) {
  DarnConfig cfg;
  cfg.hidden = {8};
  cfg.seed = 4;
  return DarnModel(t, cfg);
}

TvaeModel small_tvae(const Table& t) {
  TvaeConfig cfg;
  cfg.hidden = {4};
  cfg.latent = 2;
  cfg.seed = 5;
  return TvaeModel(t, cfg);
}

Outcome gradients() {
  Stopwatch clock;
  double worst = 0.0;
  std::string worst_name;
  Eigen::Index biggest = 0;
  auto record = [&](const std::string& name, const nn::Vec& analytic, const nn::Vec& fd) {
    const double gap = relative_gap(analytic, fd);
    if (gap >= worst) worst = gap, worst_name = name;
    biggest = std::max(biggest, analytic.size());
  };

  {
    Eigen::VectorXd t(6), s(6);
    t << 0.3, -1.2, 2.0, 0.1, -0.4, 0.9;
    s << -0.5, 0.8, 1.1, -2.0, 0.3, 0.0;
    for (double temp : {1.0, 2.0, 5.0}) {
      nn::Vec theta = s, g = nn::Vec::Zero(6);
      annealed_ce(t, theta, temp, g);
      record("annealed_ce", g, numeric_gradient([&] { return annealed_ce(t, theta, temp); }, theta));
    }
    nn::Vec theta = s, g = nn::Vec::Zero(6);
    logit_mse(t, theta, g);
    record("logit_mse", g, numeric_gradient([&] { return logit_mse(t, theta); }, theta));
  }

  const auto mixed = testing::mixed_table(12, 1);
  const auto cats = testing::three_cat_table(12, 2);
  auto distill_check = [&](const std::string& name, auto& student, const auto& teacher, const Table& data,
                           std::uint64_t seed) {
    const auto rows = iota_rows(data.row_count());
    nn::Vec g = nn::Vec::Zero(student.params().size());
    student.distill_loss(teacher, data, rows, &g, seed);
    record(name, g,
           numeric_gradient([&] { return student.distill_loss(teacher, data, rows, nullptr, seed); },
                            student.params()));
  };
  auto loss_check = [&](const std::string& name, auto& model, const Table& data, std::uint64_t seed) {
    const auto rows = iota_rows(data.row_count());
    nn::Vec g = nn::Vec::Zero(model.params().size());
    model.loss(data, rows, &g, seed);
    record(name, g, numeric_gradient([&] { return model.loss(data, rows, nullptr, seed); }, model.params()));
  };

  auto mdn_t = small_mdn(mixed), mdn_s = small_mdn(mixed);
  jitter(mdn_t.params(), 0.3, 10);
  jitter(mdn_s.params(), 0.3, 11);
  loss_check("mdn nll", mdn_s, mixed, 0);
  distill_check("mdn distill", mdn_s, mdn_t, mixed, 0);

  auto darn_t = small_darn(cats), darn_s = small_darn(cats);
  jitter(darn_t.params(), 0.5, 13);
  jitter(darn_s.params(), 0.1, 14);
  loss_check("darn nll", darn_s, cats, 0);
  distill_check("darn distill", darn_s, darn_t, cats, 0);

  const auto small_mixed = testing::mixed_table(10, 3);
  auto tvae_t = small_tvae(small_mixed), tvae_s = small_tvae(small_mixed);
  jitter(tvae_t.params(), 0.3, 16);
  jitter(tvae_s.params(), 0.1, 17);
  loss_check("tvae elbo", tvae_s, small_mixed, 42);
  distill_check("tvae distill", tvae_s, tvae_t, small_mixed, 42);

  const auto up = testing::mixed_table(8, 5);
  const auto a = iota_rows(mixed.row_count()), b = iota_rows(up.row_count());
  for (double lambda : kLambdaGrid) {
    nn::Vec g = nn::Vec::Zero(mdn_s.params().size());
    total_update_loss(mdn_t, mdn_s, mixed, a, up, b, 0.7, lambda, &g, 1);
    record("total loss", g, numeric_gradient([&] {
             return total_update_loss(mdn_t, mdn_s, mixed, a, up, b, 0.7, lambda, nullptr, 1);
           }, mdn_s.params()));
  }

  const double secs = clock.seconds();
  return {1, worst <= 1e-4 && biggest <= 200 && secs < 60.0,
          "worst relative gap " + fmt(worst, 3) + " (" + worst_name + "), largest toy " + std::to_string(biggest) +
              " params, " + fmt(secs, 3) + " s"};
}

// Per-example loss is the value of the first column.
class ColumnModel final : public LearnedModel {
 public:
  explicit ColumnModel(Schema s) : schema_(std::move(s)) {}
  std::string arch() const override { return "column"; }
  TaskTag task() const override { return TaskTag::aqp; }
  const Schema& schema() const override { return schema_; }
  std::unique_ptr<LearnedModel> clone() const override { return std::make_unique<ColumnModel>(*this); }
  double loss(const Table&, std::span<const std::size_t>, nn::Vec*, std::uint64_t) const override { return 0.0; }
  std::vector<double> per_example_loss(const Table& data) const override {
    return {data.reals(0).begin(), data.reals(0).end()};
  }
  double distill_loss(const LearnedModel&, const Table&, std::span<const std::size_t>, nn::Vec*,
                      std::uint64_t) const override {
    return 0.0;
  }
  nlohmann::json to_json() const override { return {}; }

 private:
  Schema schema_;
};

Outcome bootstrap_oracle() {
  Stopwatch clock;
  const std::vector<double> population{0.0, 2.0};
  // every ordered resample of size 2 is equally likely
  double sum = 0.0, sq = 0.0;
  int cases = 0;
  for (double a : population)
    for (double b : population) {
      const double m = (a + b) / 2.0;
      sum += m;
      sq += m * m;
      ++cases;
    }
  const double oracle = std::sqrt(sq / cases - (sum / cases) * (sum / cases));

  const Schema s({ColumnSpec::numeric("loss", 0.0, 2.0)});
  const auto table = testing::table_of(s, {{0.0}, {2.0}});
  const auto st = offline_calibrate(ColumnModel(s), table, 100000, 2, 2024);
  const double secs = clock.seconds();
  return {2, std::abs(st.boot_std - oracle) <= 1e-2 && secs < 10.0,
          "bootstrap std " + fmt(st.boot_std, 5) + " vs enumeration " + fmt(oracle, 5) + ", " + fmt(secs, 3) + " s"};
}

Outcome mog_detection() {
  Stopwatch clock;
  const auto base = datasets::make_mog(datasets::mog_base(), 1);
  MdnConfig mc;
  mc.components = 10;
  mc.hidden = {64};
  MdnModel model(base.schema(), "x", "y", mc);
  TrainConfig tc;
  tc.epochs = 30;
  train(model, base, tc);

  constexpr std::size_t kBatch = 256;
  constexpr int kTrials = 200;
  const auto state = offline_calibrate(model, base, 1000, kBatch, 5);
  const auto shifted = datasets::make_mog(datasets::mog_shifted(), 3);
  int false_alarms = 0, detected = 0;
  for (int i = 0; i < kTrials; ++i) {
    if (online_test(state, model, sample_rows(base, kBatch, 100 + i)).decision == Decision::ood) ++false_alarms;
    if (online_test(state, model, sample_rows(shifted, kBatch, 900 + i)).decision == Decision::ood) ++detected;
  }
  const double secs = clock.seconds();
  const double type1 = double(false_alarms) / kTrials, power = double(detected) / kTrials;
  return {3, type1 <= 0.05 && power >= 0.99 && secs < 300.0,
          "IND flagged " + fmt(type1, 3) + ", shifted flagged " + fmt(power, 3) + " (batch 256, " +
              std::to_string(kTrials) + " trials), " + fmt(secs, 3) + " s"};
}

Outcome invariants() {
  Stopwatch clock;
  double darn_cond = 0.0, darn_joint = 0.0;
  {
    const auto t = testing::three_cat_table(600, 21, 3, 4, 2);
    DarnModel m(t, DarnConfig{{32, 32}, 2.0, 2});
    TrainConfig tc;
    tc.epochs = 15;
    train(m, t, tc);
    double joint = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 2; ++c) {
          const std::int32_t codes[] = {a, b, c};
          for (const auto& p : m.conditionals(codes)) darn_cond = std::max(darn_cond, std::abs(p.sum() - 1.0));
          joint += std::exp(m.joint_logprob(codes));
        }
    darn_joint = std::abs(joint - 1.0);
  }

  double simplex = 0.0, density = 0.0;
  bool nonnegative = true;
  {
    const auto t = testing::mixed_table(600, 22);
    MdnModel m(t.schema(), "x", "y", MdnConfig{4, {16}, 1e-3, 2.0, 3});
    TrainConfig tc;
    tc.epochs = 15;
    train(m, t, tc);
    for (int x = 0; x < m.categories(); ++x) {
      const auto g = m.conditional(x);
      simplex = std::max(simplex, std::abs(std::accumulate(g.weight.begin(), g.weight.end(), 0.0) - 1.0));
      for (double w : g.weight) nonnegative = nonnegative && w >= 0.0;
      double lo = 1e300, hi = -1e300;
      for (std::size_t k = 0; k < g.mean.size(); ++k) {
        lo = std::min(lo, g.mean[k] - 12.0 * g.stddev[k]);
        hi = std::max(hi, g.mean[k] + 12.0 * g.stddev[k]);
      }
      const int n = 200000;
      const double h = (hi - lo) / n;
      double area = 0.5 * (g.pdf(lo) + g.pdf(hi));
      for (int i = 1; i < n; ++i) area += g.pdf(lo + i * h);
      density = std::max(density, std::abs(area * h - 1.0));
    }
  }

  double self_distill = 1.0;
  {
    const auto t = testing::mixed_table(200, 23);
    TvaeModel m(t, TvaeConfig{4, {16}, 0.01, false, 4});
    TrainConfig tc;
    tc.epochs = 5;
    train(m, t, tc);
    const auto teacher = m.clone();
    self_distill = m.distill_loss(*teacher, t, iota_rows(t.row_count()), nullptr, 77);
  }

  const double secs = clock.seconds();
  const bool ok = darn_cond <= 1e-5 && darn_joint <= 1e-5 && simplex <= 1e-9 && nonnegative && density <= 1e-2 &&
                  self_distill == 0.0 && secs < 60.0;
  return {9, ok,
          "darn conditional gap " + fmt(darn_cond, 3) + ", joint gap " + fmt(darn_joint, 3) + ", mdn simplex gap " +
              fmt(simplex, 3) + ", density gap " + fmt(density, 3) + ", tvae self-distillation " +
              fmt(self_distill, 3) + ", " + fmt(secs, 3) + " s"};
}

// 1000 rows over a 3x3x3 domain; cell (a, b, c) holds a share proportional to 2 + (a + 2b + c) % 4.
Table enumerable_toy() {
  const auto schema = testing::three_cat_schema();
  std::vector<std::array<int, 3>> cells;
  std::vector<double> w;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) {
        cells.push_back({a, b, c});
        w.push_back(2.0 + (a + 2 * b + c) % 4);
      }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  constexpr int kRows = 1000;
  std::vector<int> counts(w.size());
  std::vector<std::pair<double, std::size_t>> rest;
  int used = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double share = kRows * w[i] / total;
    counts[i] = static_cast<int>(share);
    used += counts[i];
    rest.emplace_back(share - counts[i], i);
  }
  std::sort(rest.rbegin(), rest.rend());
  for (int i = 0; used < kRows; ++i, ++used) ++counts[rest[i].second];
  TableBuilder tb(schema);
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (int k = 0; k < counts[i]; ++k) {
      const double row[] = {double(cells[i][0]), double(cells[i][1]), double(cells[i][2])};
      tb.append(row);
    }
  return sample_rows(std::move(tb).build(), kRows, 5);
}

double normal_quantile(double p) {
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// 333 rows per category at the exact quantiles of N(-1.5 + 1.5 x, 0.4).
Table quantile_toy() {
  const Schema s({ColumnSpec::categorical("x", {"k0", "k1", "k2"}), ColumnSpec::numeric("y", -3.0, 3.0)});
  constexpr int kPer = 333;
  TableBuilder tb(s);
  for (int x = 0; x < 3; ++x)
    for (int i = 0; i < kPer; ++i) {
      const double row[] = {double(x), -1.5 + 1.5 * x + 0.4 * normal_quantile((i + 0.5) / kPer)};
      tb.append(row);
    }
  return sample_rows(std::move(tb).build(), 3 * kPer, 9);
}

Outcome exact_oracle() {
  Stopwatch clock;
  const auto toy = enumerable_toy();
  DarnModel darn(toy, DarnConfig{{64, 64}, 2.0, 6});
  TrainConfig tc;
  tc.epochs = 300;
  tc.batch_size = 100;
  tc.base_lr = 3e-3;
  tc.early_stop_patience = 0;
  train(darn, toy, tc);

  double darn_worst = 1.0;
  int darn_queries = 0;
  for (int mask = 1; mask < 8; ++mask) {
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < 3; ++c)
      if (mask & (1 << c)) cols.push_back(c);
    const int combos = static_cast<int>(std::pow(3, cols.size()));
    for (int v = 0; v < combos; ++v) {
      Query q;
      int rest = v;
      for (auto c : cols) {
        q.filters.push_back({c, Op::eq, double(rest % 3)});
        rest /= 3;
      }
      const double truth = ground_truth(toy, q);
      if (truth <= 0) continue;
      darn_worst = std::max(darn_worst, q_error(ce_estimate(darn, q, 2000, 31 + v), truth));
      ++darn_queries;
    }
  }

  const auto mixed = quantile_toy();
  MdnModel mdn(mixed.schema(), "x", "y", MdnConfig{6, {32}, 1e-3, 2.0, 7});
  TrainConfig mt;
  mt.epochs = 200;
  mt.batch_size = 100;
  mt.early_stop_patience = 0;
  train(mdn, mixed, mt);

  double mdn_worst = 1.0;
  int mdn_queries = 0;
  const std::vector<double> grid{0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95};
  for (int x = 0; x < 3; ++x) {
    std::vector<double> ys;
    for (std::size_t r = 0; r < mixed.row_count(); ++r)
      if (mixed.codes(0)[r] == x) ys.push_back(mixed.reals(1)[r]);
    std::sort(ys.begin(), ys.end());
    auto quantile = [&](double p) { return ys[static_cast<std::size_t>(p * (ys.size() - 1))]; };
    for (std::size_t i = 0; i < grid.size(); ++i)
      for (std::size_t j = i + 1; j < grid.size(); ++j) {
        Query q;
        q.filters = {{0, Op::eq, double(x)}, {1, Op::ge, quantile(grid[i])}, {1, Op::le, quantile(grid[j])}};
        mdn_worst = std::max(mdn_worst, q_error(aqp_estimate(mdn, q), ground_truth(mixed, q)));
        ++mdn_queries;
      }
  }

  const double secs = clock.seconds();
  return {10, darn_worst <= 1.1 && mdn_worst <= 1.2 && secs < 600.0,
          "darn max q-error " + fmt(darn_worst) + " over " + std::to_string(darn_queries) +
              " equality queries, mdn max q-error " + fmt(mdn_worst) + " over " + std::to_string(mdn_queries) +
              " range queries, " + fmt(secs, 3) + " s"};
}

}  // namespace

std::vector<Outcome> fast_group() {
  return {gradients(), bootstrap_oracle(), mog_detection(), invariants(), exact_oracle()};
}

}  // namespace ddup::acceptance
