// Mixture-of-Gaussians forgetting picture: an MDN trained on five peaks is fed
// fifty batches holding two new peaks, under DDUp, stale and plain fine-tuning.

#include <algorithm>
#include <random>
#include <sstream>

#include "acceptance.hpp"
#include "ddup/datasets.hpp"
#include "ddup/distill.hpp"
#include "ddup/experiment.hpp"
#include "ddup/mdn.hpp"
#include "ddup/plot.hpp"

namespace ddup::acceptance {
namespace {

constexpr double kLo = -12.0, kHi = 12.0, kWidth = 0.2;
constexpr int kBatches = 50;

std::vector<double> sample_histogram(const MdnModel& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto ys = m.conditional(0).sample(40000, rng);
  std::vector<double> counts(static_cast<std::size_t>((kHi - kLo) / kWidth), 0.0);
  for (double y : ys) {
    const auto b = static_cast<long>((y - kLo) / kWidth);
    if (b >= 0 && b < static_cast<long>(counts.size())) counts[b] += 1.0;
  }
  return counts;
}

// A peak at `mean`: a local maximum within 0.5 of it reaching half the global maximum.
bool has_peak(const std::vector<double>& h, double mean) {
  const double top = *std::max_element(h.begin(), h.end());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double centre = kLo + (i + 0.5) * kWidth;
    if (std::abs(centre - mean) > 0.5 || h[i] < 0.5 * top) continue;
    const double left = i > 0 ? h[i - 1] : 0.0, right = i + 1 < h.size() ? h[i + 1] : 0.0;
    if (h[i] >= left && h[i] >= right) return true;
  }
  return false;
}

int count_peaks(const std::vector<double>& h, const std::vector<double>& means) {
  return static_cast<int>(std::count_if(means.begin(), means.end(), [&](double m) { return has_peak(h, m); }));
}

}  // namespace

std::vector<Outcome> fig4_group() {
  Stopwatch clock;
  const auto base_spec = datasets::mog_base();
  auto new_spec = datasets::mog_shifted();
  // 400 new rows per category: each new peak ends up as tall as an original one
  new_spec.rows_per_category = 400;
  const auto base = datasets::make_mog(base_spec, 1);
  const auto incoming = sample_rows(datasets::make_mog(new_spec, 2), 400 * new_spec.categories, 3);

  MdnModel m0(base.schema(), "x", "y", MdnConfig{10, {64}, 1e-3, 2.0, 1});
  PipelineConfig pc;
  pc.train.epochs = 40;
  pc.train.early_stop_patience = 0;
  train(m0, base, pc.train);

  auto ddup = start_pipeline(m0.clone(), base, pc);
  auto baseline = m0.clone();
  const double tune_lr = ExperimentConfig{}.baseline_lr_scale * pc.train.base_lr;
  const std::size_t per_batch = incoming.row_count() / kBatches;
  int distilled = 0;
  for (int t = 1; t <= kBatches; ++t) {
    std::vector<std::size_t> rows(per_batch);
    for (std::size_t i = 0; i < per_batch; ++i) rows[i] = (t - 1) * per_batch + i;
    InsertionBatch batch{t, incoming.take(rows)};
    if (pipeline_step(ddup, batch, pc).branch == Branch::distill) ++distilled;
    train_at_lr(*baseline, batch.data, pc.train, tune_lr, false);
  }

  const auto old_means = datasets::mog_peaks(base_spec, 0);
  const auto new_means = datasets::mog_peaks(new_spec, 0);
  const auto h_ddup = sample_histogram(dynamic_cast<const MdnModel&>(*ddup.model), 11);
  const auto h_stale = sample_histogram(m0, 11);
  const auto h_tune = sample_histogram(dynamic_cast<const MdnModel&>(*baseline), 11);

  const int ddup_old = count_peaks(h_ddup, old_means), ddup_new = count_peaks(h_ddup, new_means);
  const int stale_new = count_peaks(h_stale, new_means);
  const int tune_old = count_peaks(h_tune, old_means);
  const int lost = static_cast<int>(old_means.size()) - tune_old;

  for (const auto& [name, h] : {std::pair{"ddup", &h_ddup}, {"stale", &h_stale}, {"finetune", &h_tune}})
    plot::write_file(scratch_dir() + "/fig4_" + name + ".svg",
                     plot::histogram({std::string("category 0 samples, ") + name, "y", "count"}, *h, kLo, kHi));

  const double secs = clock.seconds();
  const bool ok = ddup_old == static_cast<int>(old_means.size()) &&
                  ddup_new == static_cast<int>(new_means.size()) && stale_new == 0 && lost >= 2 && secs < 900.0;
  std::ostringstream d;
  d << "ddup keeps " << ddup_old << "/" << old_means.size() << " original and shows " << ddup_new << "/"
    << new_means.size() << " new peaks (" << distilled << " distill steps); stale shows " << stale_new
    << " new; fine-tune lost " << lost << " original; " << fmt(secs, 3) << " s";
  return {{5, ok, d.str()}};
}

}  // namespace ddup::acceptance
