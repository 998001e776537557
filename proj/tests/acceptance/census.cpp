// Census runs: DARN under every policy (accuracy, transfer balance, speed) and
// MDN under DDUp and retraining (speed), then the TVAE fidelity ordering.

#include <fstream>
#include <map>
#include <sstream>

#include "acceptance.hpp"
#include "ddup/experiment.hpp"

namespace ddup::acceptance {
namespace {

std::map<std::string, StepRecord> run(const std::string& config, const std::string& out,
                                      std::vector<Policy> policies = {}) {
  auto cfg = ExperimentConfig::load(config_dir() + "/" + config);
  cfg.out_dir = scratch_dir() + "/" + out;
  if (!policies.empty()) cfg.policies = std::move(policies);
  const auto dir = run_experiment(cfg);
  report(dir);
  std::map<std::string, StepRecord> last;
  std::ifstream in(dir + "/steps.jsonl");
  for (std::string line; std::getline(in, line);) {
    auto r = StepRecord::from_json(nlohmann::json::parse(line));
    last[r.policy] = std::move(r);
  }
  return last;
}

double stat(const StepRecord& r, const char* group, const char* key) {
  return r.metrics.at("count").at(group).at(key).get<double>();
}

}  // namespace

std::vector<Outcome> census_group() {
  Stopwatch clock;
  auto darn = run("census_darn.json", "census_darn");
  const auto& dd = darn.at("ddup");
  const auto& base = darn.at("baseline");
  const auto& re = darn.at("retrain");
  const double darn_secs = clock.seconds();

  std::vector<Outcome> out;
  {
    const double med = stat(dd, "all", "median"), p99 = stat(dd, "all", "p99");
    const double base_p99 = stat(base, "all", "p99"), re_med = stat(re, "all", "median");
    std::ostringstream d;
    d << "ddup median " << fmt(med) << " p99 " << fmt(p99) << " (branch " << dd.branch << "); baseline p99 "
      << fmt(base_p99) << " (" << fmt(base_p99 / p99, 3) << "x); retrain median " << fmt(re_med) << "; stale p99 "
      << fmt(stat(darn.at("stale"), "all", "p99")) << "; " << fmt(darn_secs, 4) << " s";
    out.push_back({6, med <= 1.3 && p99 <= 5.0 && base_p99 >= 20.0 * p99 && med <= 1.5 * re_med && darn_secs < 7200.0,
                   d.str()});
  }
  {
    const double fwt = stat(dd, "changed", "median"), bwt = stat(dd, "fixed", "median");
    const double bfwt = stat(base, "changed", "median"), bbwt = stat(base, "fixed", "median");
    std::ostringstream d;
    d << "ddup FWT " << fmt(fwt) << " BWT " << fmt(bwt) << "; baseline FWT " << fmt(bfwt) << " BWT " << fmt(bbwt)
      << " (" << stat(dd, "changed", "count") << " changed / " << stat(dd, "fixed", "count") << " fixed queries)";
    out.push_back({7, std::abs(fwt - bwt) <= 0.5 && bbwt >= 2.0 * bfwt, d.str()});
  }

  auto mdn = run("census_mdn.json", "census_mdn", {Policy::ddup, Policy::retrain});
  const double darn_ratio = re.wall_time / dd.wall_time;
  const double mdn_ratio = mdn.at("retrain").wall_time / mdn.at("ddup").wall_time;
  std::ostringstream d;
  d << "darn update " << fmt(dd.wall_time, 3) << " s vs retrain " << fmt(re.wall_time, 3) << " s ("
    << fmt(darn_ratio, 3) << "x); mdn update " << fmt(mdn.at("ddup").wall_time, 3) << " s vs retrain "
    << fmt(mdn.at("retrain").wall_time, 3) << " s (" << fmt(mdn_ratio, 3) << "x)";
  out.push_back({8, darn_ratio >= 2.0 && mdn_ratio >= 2.0, d.str()});
  return out;
}

std::vector<Outcome> tvae_group() {
  Stopwatch clock;
  auto runs = run("census_tvae.json", "census_tvae", {Policy::ddup, Policy::baseline, Policy::retrain});
  auto f1 = [&](const char* p) { return runs.at(p).metrics.at("f1_synth").get<double>(); };
  const double dd = f1("ddup"), base = f1("baseline"), re = f1("retrain");
  const double secs = clock.seconds();
  std::ostringstream d;
  d << "f1_synth ddup " << fmt(dd) << ", baseline " << fmt(base) << ", retrain " << fmt(re) << "; f1_real "
    << fmt(runs.at("ddup").metrics.at("f1_real").get<double>()) << "; " << fmt(secs, 4) << " s";
  return {{11, dd >= base + 0.05 && std::abs(dd - re) <= 0.05 && secs < 3600.0, d.str()}};
}

}  // namespace ddup::acceptance
