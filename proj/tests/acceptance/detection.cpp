// False positive / false negative rates of the loss-based detector on census,
// with graded perturbation pools, for all three model families.

#include <sstream>

#include "acceptance.hpp"
#include "ddup/darn.hpp"
#include "ddup/datasets.hpp"
#include "ddup/detector.hpp"
#include "ddup/mdn.hpp"
#include "ddup/tvae.hpp"

namespace ddup::acceptance {
namespace {

int inversions(const std::vector<double>& v) {
  int n = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[i - 1]) ++n;
  return n;
}

}  // namespace

std::vector<Outcome> detection_group() {
  Stopwatch clock;
  const auto census = datasets::make_census_like();
  const std::vector<std::string> columns{"occupation", "hours_per_week", "age", "education", "marital_status"};
  const std::vector<std::size_t> sizes{8, 32, 128, 512, 2000};
  constexpr int kTrials = 1000;

  const auto ind_pool = sample_rows(census, census.row_count() / 2, 41);
  const auto ood_pool = perturbation_pool(census, columns, 0.1, 43);
  const auto resample = default_resample_size(census.row_count());

  TrainConfig tc;
  tc.epochs = 20;
  std::vector<std::pair<std::string, ModelPtr>> models;
  models.emplace_back("mdn", std::make_unique<MdnModel>(census.schema(), "occupation", "hours_per_week"));
  models.emplace_back("darn", std::make_unique<DarnModel>(census));
  models.emplace_back("tvae", std::make_unique<TvaeModel>(census));

  bool ok = true;
  std::ostringstream detail;
  for (auto& [name, model] : models) {
    train(*model, census, tc);
    const auto state = offline_calibrate(*model, census, 1000, resample, 47);
    std::vector<double> fpr, fnr;
    for (auto b : sizes) {
      const auto r = evaluate_rates(state, *model, ind_pool, ood_pool, b, kTrials, 53 + b);
      fpr.push_back(r.fpr);
      fnr.push_back(r.fnr);
    }
    const double f = fpr.back(), n = fnr.back();
    const bool level = name == "mdn" ? (f <= 0.20 && n <= 0.05) : (f <= 0.01 && n <= 0.01);
    const bool monotone = inversions(fpr) <= 1 && inversions(fnr) <= 1;
    ok = ok && level && monotone;
    detail << name << " FPR";
    for (double v : fpr) detail << ' ' << fmt(v, 3);
    detail << " FNR";
    for (double v : fnr) detail << ' ' << fmt(v, 3);
    detail << "; ";
  }
  const double secs = clock.seconds();
  detail << "batch sizes 8..2000, resample " << resample << ", " << fmt(secs, 4) << " s";
  return {{4, ok && secs < 1800.0, detail.str()}};
}

}  // namespace ddup::acceptance
