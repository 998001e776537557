#include "ddup/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <limits>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "ddup/csv.hpp"
#include "ddup/darn.hpp"
#include "ddup/datasets.hpp"
#include "ddup/mdn.hpp"
#include "ddup/plot.hpp"
#include "ddup/tvae.hpp"

namespace ddup {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  try {
    return j.value(key, fallback);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

class Stopwatch {
 public:
  Stopwatch() : wall_(std::chrono::steady_clock::now()), cpu_(std::clock()) {}
  double wall() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_).count(); }
  double cpu() const { return static_cast<double>(std::clock() - cpu_) / CLOCKS_PER_SEC; }

 private:
  std::chrono::steady_clock::time_point wall_;
  std::clock_t cpu_;
};

}  // namespace

std::string_view to_string(Family f) {
  switch (f) {
    case Family::mdn: return "mdn";
    case Family::darn: return "darn";
    case Family::tvae: return "tvae";
  }
  return "?";
}

std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::ddup: return "ddup";
    case Policy::baseline: return "baseline";
    case Policy::stale: return "stale";
    case Policy::retrain: return "retrain";
  }
  return "?";
}

Family family_from_string(std::string_view s) {
  for (auto f : {Family::mdn, Family::darn, Family::tvae})
    if (to_string(f) == s) return f;
  throw ConfigError("unknown model family '" + std::string(s) + "' (expected mdn, darn or tvae)");
}

Policy policy_from_string(std::string_view s) {
  for (auto p : {Policy::ddup, Policy::baseline, Policy::stale, Policy::retrain})
    if (to_string(p) == s) return p;
  throw ConfigError("unknown policy '" + std::string(s) + "' (expected ddup, baseline, stale or retrain)");
}

void ExperimentConfig::validate() const {
  if (policies.empty()) throw ConfigError("config: at least one policy is required");
  std::set<Policy> seen(policies.begin(), policies.end());
  if (seen.size() != policies.size()) throw ConfigError("config: duplicate policy");
  if (dataset.generator.empty()) {
    if (dataset.csv_path.empty() || dataset.schema_path.empty())
      throw ConfigError("config: dataset needs a generator or both csv_path and schema_path");
    for (const auto& p : {dataset.csv_path, dataset.schema_path})
      if (!fs::exists(p)) throw ConfigError("config: file not found: " + p);
  } else if (dataset.generator != "census" && dataset.generator != "mog") {
    throw ConfigError("config: unknown generator '" + dataset.generator + "' (expected census or mog)");
  }
  if (!(stream.fraction > 0.0 && stream.fraction <= 1.0)) throw ConfigError("config: stream.fraction must be in (0, 1]");
  if (stream.n_batches < 1) throw ConfigError("config: stream.n_batches must be positive");
  if (!(baseline_lr_scale > 0.0)) throw ConfigError("config: baseline_lr_scale must be positive");
  if (eval.n_queries < 1) throw ConfigError("config: eval.n_queries must be positive");
  if (eval.ce_samples < 1) throw ConfigError("config: eval.ce_samples must be positive");
  if (!(eval.holdout_fraction > 0.0 && eval.holdout_fraction < 1.0))
    throw ConfigError("config: eval.holdout_fraction must be in (0, 1)");
  if (family == Family::mdn && (!model.contains("x_column") || !model.contains("y_column")))
    throw ConfigError("config: the mdn family needs model.x_column and model.y_column");
  if (out_dir.empty()) throw ConfigError("config: out_dir is empty");
  try {
    pipeline.distill.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json pol = nlohmann::json::array();
  for (auto p : policies) pol.push_back(std::string(to_string(p)));
  return {
      {"dataset",
       {{"generator", dataset.generator},
        {"csv_path", dataset.csv_path},
        {"schema_path", dataset.schema_path},
        {"rows", dataset.rows},
        {"seed", dataset.seed}}},
      {"family", std::string(to_string(family))},
      {"model", model},
      {"stream",
       {{"fraction", stream.fraction},
        {"n_batches", stream.n_batches},
        {"drift", stream.drift},
        {"drift_columns", stream.drift_columns}}},
      {"pipeline", pipeline.to_json()},
      {"policies", pol},
      {"baseline_lr_scale", baseline_lr_scale},
      {"eval",
       {{"n_queries", eval.n_queries},
        {"ce_samples", eval.ce_samples},
        {"target_column", eval.target_column},
        {"holdout_fraction", eval.holdout_fraction},
        {"synth_rows", eval.synth_rows},
        {"loglik_rows", eval.loglik_rows},
        {"forest",
         {{"trees", eval.forest.trees},
          {"max_depth", eval.forest.max_depth},
          {"min_leaf", eval.forest.min_leaf},
          {"max_bins", eval.forest.max_bins},
          {"features_per_split", eval.forest.features_per_split},
          {"seed", eval.forest.seed}}}}},
      {"detection",
       {{"enabled", detection.enabled},
        {"batch_sizes", detection.batch_sizes},
        {"trials", detection.trials},
        {"resample_size", detection.resample_size},
        {"n_resamples", detection.n_resamples},
        {"pool_fraction", detection.pool_fraction},
        {"columns", detection.columns}}},
      {"seed", seed},
      {"out_dir", out_dir},
  };
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  ExperimentConfig c;
  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      c.dataset.generator = get_or(d, "generator", c.dataset.generator);
      c.dataset.csv_path = get_or(d, "csv_path", c.dataset.csv_path);
      c.dataset.schema_path = get_or(d, "schema_path", c.dataset.schema_path);
      c.dataset.rows = get_or(d, "rows", c.dataset.rows);
      c.dataset.seed = get_or(d, "seed", c.dataset.seed);
    }
    if (j.contains("family")) c.family = family_from_string(j.at("family").get<std::string>());
    if (j.contains("model")) c.model = j.at("model");
    if (j.contains("stream")) {
      const auto& s = j.at("stream");
      c.stream.fraction = get_or(s, "fraction", c.stream.fraction);
      c.stream.n_batches = get_or(s, "n_batches", c.stream.n_batches);
      c.stream.drift = get_or(s, "drift", c.stream.drift);
      c.stream.drift_columns = get_or(s, "drift_columns", c.stream.drift_columns);
    }
    if (j.contains("pipeline")) c.pipeline = PipelineConfig::from_json(j.at("pipeline"));
    if (j.contains("policies")) {
      c.policies.clear();
      for (const auto& p : j.at("policies")) c.policies.push_back(policy_from_string(p.get<std::string>()));
    }
    c.baseline_lr_scale = get_or(j, "baseline_lr_scale", c.baseline_lr_scale);
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      c.eval.n_queries = get_or(e, "n_queries", c.eval.n_queries);
      c.eval.ce_samples = get_or(e, "ce_samples", c.eval.ce_samples);
      c.eval.target_column = get_or(e, "target_column", c.eval.target_column);
      c.eval.holdout_fraction = get_or(e, "holdout_fraction", c.eval.holdout_fraction);
      c.eval.synth_rows = get_or(e, "synth_rows", c.eval.synth_rows);
      c.eval.loglik_rows = get_or(e, "loglik_rows", c.eval.loglik_rows);
      if (e.contains("forest")) {
        const auto& f = e.at("forest");
        c.eval.forest.trees = get_or(f, "trees", c.eval.forest.trees);
        c.eval.forest.max_depth = get_or(f, "max_depth", c.eval.forest.max_depth);
        c.eval.forest.min_leaf = get_or(f, "min_leaf", c.eval.forest.min_leaf);
        c.eval.forest.max_bins = get_or(f, "max_bins", c.eval.forest.max_bins);
        c.eval.forest.features_per_split = get_or(f, "features_per_split", c.eval.forest.features_per_split);
        c.eval.forest.seed = get_or(f, "seed", c.eval.forest.seed);
      }
    }
    if (j.contains("detection")) {
      const auto& d = j.at("detection");
      c.detection.enabled = get_or(d, "enabled", c.detection.enabled);
      c.detection.batch_sizes = get_or(d, "batch_sizes", c.detection.batch_sizes);
      c.detection.trials = get_or(d, "trials", c.detection.trials);
      c.detection.resample_size = get_or(d, "resample_size", c.detection.resample_size);
      c.detection.n_resamples = get_or(d, "n_resamples", c.detection.n_resamples);
      c.detection.pool_fraction = get_or(d, "pool_fraction", c.detection.pool_fraction);
      c.detection.columns = get_or(d, "columns", c.detection.columns);
    }
    c.seed = get_or(j, "seed", c.seed);
    c.out_dir = get_or(j, "out_dir", c.out_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

Table load_dataset(const DatasetSpec& spec) {
  if (spec.generator == "census")
    return spec.rows ? datasets::make_census_like(spec.rows, spec.seed) : datasets::make_census_like(48842, spec.seed);
  if (spec.generator == "mog") {
    auto m = datasets::mog_base();
    if (spec.rows) m.rows_per_category = static_cast<int>(std::max<std::size_t>(1, spec.rows / m.categories));
    return datasets::make_mog(m, spec.seed);
  }
  if (!spec.generator.empty()) throw ConfigError("unknown generator '" + spec.generator + "'");
  auto loaded = load_table(spec.csv_path, Schema::load(spec.schema_path));
  if (loaded.rejected)
    std::cerr << "warning: " << loaded.rejected << " rows of '" << spec.csv_path << "' fall outside the schema\n";
  return std::move(loaded.table);
}

ModelPtr make_model(Family family, const nlohmann::json& settings, const Table& fit_data) {
  try {
    switch (family) {
      case Family::mdn:
        return std::make_unique<MdnModel>(fit_data.schema(), settings.at("x_column").get<std::string>(),
                                          settings.at("y_column").get<std::string>(), MdnConfig::from_json(settings));
      case Family::darn: return std::make_unique<DarnModel>(fit_data, DarnConfig::from_json(settings));
      case Family::tvae: return std::make_unique<TvaeModel>(fit_data, TvaeConfig::from_json(settings));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: model settings: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("config: model settings: ") + e.what());
  }
  throw ConfigError("unknown model family");
}

nlohmann::json StepRecord::to_json() const {
  return {{"policy", policy},       {"t", t},
          {"branch", branch},       {"decision", decision},
          {"d", d},                 {"threshold", threshold},
          {"wall_time", wall_time}, {"cpu_time", cpu_time},
          {"loglik_old", loglik_old}, {"loglik_new", loglik_new},
          {"metrics", metrics}};
}

StepRecord StepRecord::from_json(const nlohmann::json& j) {
  StepRecord r;
  r.policy = j.at("policy").get<std::string>();
  r.t = j.at("t").get<int>();
  r.branch = j.value("branch", std::string());
  r.decision = j.value("decision", std::string());
  r.d = j.value("d", 0.0);
  r.threshold = j.value("threshold", 0.0);
  r.wall_time = j.value("wall_time", 0.0);
  r.cpu_time = j.value("cpu_time", 0.0);
  r.loglik_old = j.value("loglik_old", 0.0);
  r.loglik_new = j.value("loglik_new", 0.0);
  r.metrics = j.value("metrics", nlohmann::json::object());
  return r;
}

namespace {

// Scores a model against the current table; the same instance serves every policy.
class Scorer {
 public:
  Scorer(const ExperimentConfig& cfg, const Table& base, const Table* holdout, const std::string& run_dir)
      : cfg_(cfg), holdout_(holdout), dir_(run_dir + "/per_query") {
    fs::create_directories(dir_);
    if (cfg.family == Family::tvae) return;
    WorkloadConfig wc;
    if (cfg.family == Family::mdn) {
      wc.style = WorkloadStyle::dbest;
      wc.x_column = cfg.model.at("x_column").get<std::string>();
      wc.y_column = cfg.model.at("y_column").get<std::string>();
      // equal thirds of COUNT, SUM and AVG
      for (Agg a : {Agg::count, Agg::sum, Agg::avg}) {
        wc.agg = a;
        const std::size_t n = cfg.eval.n_queries / 3 + (a == Agg::count ? cfg.eval.n_queries % 3 : 0);
        if (n == 0) continue;
        auto part = generate_workload(base, n, wc, cfg.seed * 31 + static_cast<int>(a));
        workload_.insert(workload_.end(), part.begin(), part.end());
      }
    } else {
      workload_ = generate_workload(base, cfg.eval.n_queries, wc, cfg.seed * 31);
    }
    write_workload(run_dir + "/workload.jsonl", workload_, base.schema());
    truths_prev_ = truths_ = ground_truths(base, workload_);
  }

  // Moves the reference table forward to include `batch`.
  void advance(const Table& table_t) {
    if (cfg_.family == Family::tvae) {
      current_ = &table_t;
      return;
    }
    truths_prev_ = truths_;
    truths_ = ground_truths(table_t, workload_);
    current_ = &table_t;
  }

  void set_initial(const Table& base) { current_ = &base; }

  nlohmann::json score(const LearnedModel& model, const std::string& tag) const {
    switch (cfg_.family) {
      case Family::darn: return score_ce(dynamic_cast<const DarnModel&>(model), tag);
      case Family::mdn: return score_aqp(dynamic_cast<const MdnModel&>(model), tag);
      case Family::tvae: return score_dg(dynamic_cast<const TvaeModel&>(model));
    }
    return {};
  }

 private:
  void write_per_query(const std::string& tag, const std::vector<std::pair<Agg, QueryRecord>>& recs) const {
    std::ofstream out(dir_ + "/" + tag + ".csv");
    out << "id,agg,truth,estimate,error,diff\n";
    for (const auto& [agg, r] : recs)
      out << r.id << ',' << to_string(agg) << ',' << num(r.truth) << ',' << num(r.estimate) << ',' << num(r.error)
          << ',' << num(r.diff) << '\n';
  }

  nlohmann::json score_ce(const DarnModel& m, const std::string& tag) const {
    std::vector<double> est(workload_.size());
    for (std::size_t i = 0; i < workload_.size(); ++i)
      est[i] = ce_estimate(m, workload_[i], cfg_.eval.ce_samples, cfg_.seed * 1000003ULL + i);
    const auto rep = transfer_metrics(workload_, truths_, truths_prev_, est, ErrorKind::q_error);
    std::vector<std::pair<Agg, QueryRecord>> recs;
    for (const auto& r : rep.per_query) recs.emplace_back(Agg::count, r);
    write_per_query(tag, recs);
    return {{"count", rep.to_json()}};
  }

  nlohmann::json score_aqp(const MdnModel& m, const std::string& tag) const {
    nlohmann::json out = nlohmann::json::object();
    std::vector<std::pair<Agg, QueryRecord>> recs;
    for (Agg a : {Agg::count, Agg::sum, Agg::avg}) {
      std::vector<Query> qs;
      std::vector<double> tt, tp, est;
      std::vector<std::size_t> ids;
      for (std::size_t i = 0; i < workload_.size(); ++i) {
        if (workload_[i].agg != a) continue;
        double e = 0.0;
        try {
          e = aqp_estimate(m, workload_[i]);
        } catch (const Error&) {
          e = 0.0;  // AVG with an empty estimated selection
        }
        qs.push_back(workload_[i]);
        tt.push_back(truths_[i]);
        tp.push_back(truths_prev_[i]);
        est.push_back(e);
        ids.push_back(i);
      }
      if (qs.empty()) continue;
      const auto kind = a == Agg::count ? ErrorKind::q_error : ErrorKind::relative;
      auto rep = transfer_metrics(qs, tt, tp, est, kind);
      for (std::size_t k = 0; k < rep.per_query.size(); ++k) {
        rep.per_query[k].id = ids[k];
        recs.emplace_back(a, rep.per_query[k]);
      }
      out[std::string(to_string(a))] = rep.to_json();
    }
    std::sort(recs.begin(), recs.end(), [](const auto& x, const auto& y) { return x.second.id < y.second.id; });
    write_per_query(tag, recs);
    return out;
  }

  nlohmann::json score_dg(const TvaeModel& m) const {
    const std::size_t n = cfg_.eval.synth_rows ? cfg_.eval.synth_rows : current_->row_count();
    const auto synth = sample_rows(m, n, cfg_.seed * 7 + 1);
    const auto res = fidelity_eval(*current_, synth, *holdout_, cfg_.eval.target_column, cfg_.eval.forest);
    return {{"f1_real", res.f1_real}, {"f1_synth", res.f1_synth}};
  }

  const ExperimentConfig& cfg_;
  const Table* holdout_;
  const Table* current_ = nullptr;
  std::string dir_;
  std::vector<Query> workload_;
  std::vector<double> truths_, truths_prev_;
};

double mean_loglik(const LearnedModel& m, const Table& t) { return -batch_loss(m, t, false).mean_loss; }

void run_detection(const ExperimentConfig& cfg, const LearnedModel& m0, const Table& base, const std::string& dir) {
  auto cols = cfg.detection.columns;
  if (cols.empty())
    for (std::size_t c = 0; c < std::min<std::size_t>(5, base.column_count()); ++c)
      cols.push_back(base.schema()[c].name);
  const auto ood = perturbation_pool(base, cols, cfg.detection.pool_fraction, cfg.seed + 17);
  const auto size = cfg.detection.resample_size ? cfg.detection.resample_size : default_resample_size(base.row_count());
  const auto state = offline_calibrate(m0, base, cfg.detection.n_resamples, size,
                                       cfg.seed + 19, cfg.pipeline.threshold_mult);
  std::ofstream out(dir + "/detection.csv");
  out << "batch_size,fpr,fnr\n";
  for (auto b : cfg.detection.batch_sizes) {
    const auto r = evaluate_rates(state, m0, base, ood, b, cfg.detection.trials, cfg.seed + 23 + b);
    out << b << ',' << num(r.fpr) << ',' << num(r.fnr) << '\n';
  }
}

}  // namespace

std::string run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::string dir = cfg.out_dir;
  fs::create_directories(dir + "/models");
  {
    auto j = cfg.to_json();
    j["version"] = kVersion;
    std::ofstream(dir + "/config.json") << j.dump(2) << '\n';
  }

  int t_ctx = 0;
  std::string phase = "load";
  try {
    Table full = load_dataset(cfg.dataset);
    Table base = full, holdout;
    if (cfg.family == Family::tvae) {
      const auto perm = seeded_permutation(full.row_count(), cfg.seed + 3);
      const auto n_hold = static_cast<std::size_t>(cfg.eval.holdout_fraction * full.row_count());
      holdout = full.take(std::span(perm.data(), n_hold));
      base = full.take(std::span(perm.data() + n_hold, perm.size() - n_hold));
    }

    phase = "stream";
    const auto stream = make_update_stream(base, cfg.stream.fraction, cfg.stream.n_batches, cfg.stream.drift,
                                           cfg.seed + 5, cfg.stream.drift_columns);
    std::vector<Table> tables{base};
    for (const auto& b : stream) tables.push_back(Table::concat(tables.back(), b.data));

    phase = "train";
    auto m0 = make_model(cfg.family, cfg.model, base);
    const Stopwatch sw0;
    train(*m0, base, cfg.pipeline.train);
    const double m0_wall = sw0.wall(), m0_cpu = sw0.cpu();
    save_model(*m0, dir + "/models/m0.json");

    if (cfg.detection.enabled) {
      phase = "detection";
      run_detection(cfg, *m0, base, dir);
    }

    phase = "workload";
    Scorer scorer(cfg, base, cfg.family == Family::tvae ? &holdout : nullptr, dir);
    const Table old_sample = sample_rows(base, std::min(base.row_count(), cfg.eval.loglik_rows), cfg.seed + 11);

    std::ofstream steps(dir + "/steps.jsonl");
    auto emit = [&](const StepRecord& r) { steps << r.to_json().dump() << '\n' << std::flush; };
    {
      scorer.set_initial(base);
      StepRecord r;
      r.policy = "m0";
      r.branch = "train";
      r.wall_time = m0_wall;
      r.cpu_time = m0_cpu;
      r.loglik_old = mean_loglik(*m0, old_sample);
      r.loglik_new = r.loglik_old;
      r.metrics = scorer.score(*m0, "m0_t0");
      emit(r);
    }

    // one pass over the stream, every policy advanced in lock step so truths are shared
    std::map<Policy, ModelPtr> models;
    PipelineState ddup_state;
    for (auto p : cfg.policies) {
      if (p == Policy::ddup)
        ddup_state = start_pipeline(m0->clone(), base, cfg.pipeline);
      else
        models[p] = m0->clone();
    }

    for (std::size_t k = 0; k < stream.size(); ++k) {
      const auto& batch = stream[k];
      t_ctx = batch.t;
      scorer.advance(tables[k + 1]);
      const Table new_sample =
          sample_rows(batch.data, std::min(batch.data.row_count(), cfg.eval.loglik_rows), cfg.seed + 13 + k);
      for (auto p : cfg.policies) {
        phase = std::string(to_string(p));
        StepRecord r;
        r.policy = phase;
        r.t = batch.t;
        const Stopwatch sw;
        const LearnedModel* current = nullptr;
        switch (p) {
          case Policy::ddup: {
            const auto rep = pipeline_step(ddup_state, batch, cfg.pipeline);
            r.wall_time = rep.wall_time + rep.detect_time;
            r.branch = std::string(to_string(rep.branch));
            r.decision = std::string(to_string(rep.test.decision));
            r.d = rep.test.d;
            r.threshold = rep.test.threshold;
            current = ddup_state.model.get();
            break;
          }
          case Policy::baseline: {
            auto& m = *models[p];
            train_at_lr(m, batch.data, cfg.pipeline.train, cfg.baseline_lr_scale * cfg.pipeline.train.base_lr, false);
            m.absorb_metadata(batch.data);
            r.branch = "fine_tune";
            current = &m;
            break;
          }
          case Policy::stale:
            r.branch = "none";
            current = models[p].get();
            break;
          case Policy::retrain: {
            auto fresh = make_model(cfg.family, cfg.model, tables[k + 1]);
            train(*fresh, tables[k + 1], cfg.pipeline.train);
            models[p] = std::move(fresh);
            r.branch = "retrain";
            current = models[p].get();
            break;
          }
        }
        if (p != Policy::ddup) r.wall_time = sw.wall();
        r.cpu_time = sw.cpu();
        r.loglik_old = mean_loglik(*current, old_sample);
        r.loglik_new = mean_loglik(*current, new_sample);
        r.metrics = scorer.score(*current, r.policy + "_t" + std::to_string(batch.t));
        save_model(*current, dir + "/models/" + r.policy + "_t" + std::to_string(batch.t) + ".json");
        emit(r);
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw Error("experiment failed during " + phase + (t_ctx ? " at step " + std::to_string(t_ctx) : "") + ": " +
                e.what());
  }
  return dir;
}

namespace {

std::vector<StepRecord> read_steps(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("no steps.jsonl in the run directory ('" + path + "')");
  std::vector<StepRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(StepRecord::from_json(nlohmann::json::parse(line)));
  return out;
}

std::vector<std::string> policy_order(const std::vector<StepRecord>& steps) {
  std::vector<std::string> names;
  for (const auto& s : steps)
    if (std::find(names.begin(), names.end(), s.policy) == names.end()) names.push_back(s.policy);
  return names;
}

plot::Series series_of(const std::vector<StepRecord>& steps, const std::string& policy,
                       const std::function<double(const StepRecord&)>& f) {
  plot::Series s{policy, {}, {}};
  for (const auto& r : steps)
    if (r.policy == policy || (r.policy == "m0" && policy != "m0")) {
      s.x.push_back(r.t);
      s.y.push_back(f(r));
    }
  return s;
}

}  // namespace

std::vector<std::string> report(const std::string& run_dir) {
  const auto steps = read_steps(run_dir + "/steps.jsonl");
  if (steps.empty()) throw Error("steps.jsonl is empty");
  std::vector<std::string> written;
  const auto policies = policy_order(steps);

  // workload summaries (deterministic given the config)
  const bool dg = steps.front().metrics.contains("f1_synth");
  {
    std::ofstream out(run_dir + "/summary.csv");
    if (dg) {
      out << "policy,t,f1_real,f1_synth\n";
      for (const auto& r : steps)
        out << r.policy << ',' << r.t << ',' << num(r.metrics.at("f1_real").get<double>()) << ','
            << num(r.metrics.at("f1_synth").get<double>()) << '\n';
    } else {
      out << "policy,t,metric,group,count,mean,median,p95,p99,max\n";
      for (const auto& r : steps)
        for (const auto& [metric, rep] : r.metrics.items())
          for (const char* group : {"all", "changed", "fixed"}) {
            const auto& s = rep.at(group);
            out << r.policy << ',' << r.t << ',' << metric << ',' << group << ',' << s.at("count").get<std::size_t>();
            for (const char* k : {"mean", "median", "p95", "p99", "max"})
              out << ',' << (s.at(k).is_number() ? num(s.at(k).get<double>()) : "nan");
            out << '\n';
          }
    }
    written.push_back(run_dir + "/summary.csv");
  }
  {
    std::ofstream out(run_dir + "/decisions.csv");
    out << "policy,t,branch,decision,d,threshold,loglik_old,loglik_new\n";
    for (const auto& r : steps)
      out << r.policy << ',' << r.t << ',' << r.branch << ',' << r.decision << ',' << num(r.d) << ','
          << num(r.threshold) << ',' << num(r.loglik_old) << ',' << num(r.loglik_new) << '\n';
    written.push_back(run_dir + "/decisions.csv");
  }
  {
    std::map<int, double> retrain_wall;
    for (const auto& r : steps)
      if (r.policy == "retrain") retrain_wall[r.t] = r.wall_time;
    std::ofstream out(run_dir + "/timings.csv");
    out << "policy,t,wall_time,cpu_time,speedup_vs_retrain\n";
    for (const auto& r : steps) {
      out << r.policy << ',' << r.t << ',' << num(r.wall_time) << ',' << num(r.cpu_time) << ',';
      const auto it = retrain_wall.find(r.t);
      out << (it != retrain_wall.end() && r.wall_time > 0.0 ? num(it->second / r.wall_time) : "") << '\n';
    }
    written.push_back(run_dir + "/timings.csv");
  }

  std::vector<std::string> lines;
  for (const auto& p : policies)
    if (p != "m0") lines.push_back(p);
  if (lines.empty()) lines.push_back("m0");

  auto chart = [&](const std::string& file, const plot::Axes& axes, const std::function<double(const StepRecord&)>& f) {
    std::vector<plot::Series> series;
    for (const auto& p : lines) series.push_back(series_of(steps, p, f));
    plot::write_file(run_dir + "/" + file, plot::line_chart(axes, series));
    written.push_back(run_dir + "/" + file);
  };
  if (dg) {
    chart("f1_vs_step.svg", {"Synthetic-data f1 per step", "step", "micro f1", false},
          [](const StepRecord& r) { return r.metrics.at("f1_synth").get<double>(); });
  } else {
    const std::string metric = steps.front().metrics.begin().key();
    const bool q = metric == "count";
    for (const char* stat : {"median", "p99"}) {
      chart(std::string("error_") + stat + "_vs_step.svg",
            {std::string(q ? "q-error " : "relative error ") + stat + " per step", "step",
             q ? "q-error" : "relative error (%)", q},
            [&, stat](const StepRecord& r) {
              const auto& v = r.metrics.at(metric).at("all").at(stat);
              return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
            });
    }
  }
  chart("loglik_vs_step.svg", {"Mean log-likelihood of old data per step", "step", "log-likelihood", false},
        [](const StepRecord& r) { return r.loglik_old; });

  if (fs::exists(run_dir + "/detection.csv")) {
    std::ifstream in(run_dir + "/detection.csv");
    std::string line;
    std::getline(in, line);
    plot::Series fpr{"FPR", {}, {}}, fnr{"FNR", {}, {}};
    while (std::getline(in, line)) {
      const auto cells = split_delimited(line, ',');
      if (cells.size() != 3) continue;
      const double b = std::log2(std::stod(cells[0]));
      fpr.x.push_back(b);
      fpr.y.push_back(std::stod(cells[1]));
      fnr.x.push_back(b);
      fnr.y.push_back(std::stod(cells[2]));
    }
    plot::write_file(run_dir + "/fpr_fnr.svg",
                     plot::line_chart({"Detector error rates", "log2(batch size)", "rate", false}, {fpr, fnr}));
    written.push_back(run_dir + "/fpr_fnr.svg");
  }
  return written;
}

}  // namespace ddup
