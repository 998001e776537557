#include "ddup/distill.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace ddup {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

void DistillConfig::validate() const {
  if (alpha && !(*alpha >= 0.0 && *alpha <= 1.0)) throw Error("distill: alpha must be in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("distill: lambda must be in [0, 1]");
  if (!(temperature > 0.0)) throw Error("distill: temperature must be positive");
  if (!(transfer_fraction > 0.0 && transfer_fraction <= 1.0)) throw Error("distill: transfer_fraction must be in (0, 1]");
  if (epochs < 1 || batch_size < 1) throw Error("distill: epochs and batch_size must be positive");
  if (!(lr > 0.0)) throw Error("distill: lr must be positive");
}

nlohmann::json DistillConfig::to_json() const {
  nlohmann::json j{{"lambda", lambda},
                   {"temperature", temperature},
                   {"transfer_fraction", transfer_fraction},
                   {"epochs", epochs},
                   {"batch_size", batch_size},
                   {"lr", lr},
                   {"seed", seed},
                   {"early_stop_tol", early_stop_tol},
                   {"early_stop_patience", early_stop_patience}};
  j["alpha"] = alpha ? nlohmann::json(*alpha) : nlohmann::json(nullptr);
  return j;
}

DistillConfig DistillConfig::from_json(const nlohmann::json& j) {
  DistillConfig c;
  if (j.contains("alpha") && !j.at("alpha").is_null()) c.alpha = j.at("alpha").get<double>();
  c.lambda = j.value("lambda", c.lambda);
  c.temperature = j.value("temperature", c.temperature);
  c.transfer_fraction = j.value("transfer_fraction", c.transfer_fraction);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.seed = j.value("seed", c.seed);
  c.early_stop_tol = j.value("early_stop_tol", c.early_stop_tol);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.validate();
  return c;
}

double resolve_alpha(const DistillConfig& cfg, std::size_t history_rows, std::size_t update_rows) {
  if (cfg.alpha) return *cfg.alpha;
  if (history_rows + update_rows == 0) throw Error("distill: no data to weight");
  return static_cast<double>(history_rows) / static_cast<double>(history_rows + update_rows);
}

std::string_view to_string(Branch b) {
  switch (b) {
    case Branch::none: return "none";
    case Branch::fine_tune: return "fine_tune";
    case Branch::distill: return "distill";
  }
  return "?";
}

double total_update_loss(const LearnedModel& teacher, const LearnedModel& student, const Table& tr,
                         std::span<const std::size_t> tr_rows, const Table& up, std::span<const std::size_t> up_rows,
                         double alpha, double lambda, nn::Vec* grad, std::uint64_t noise_seed) {
  if (tr_rows.empty() || up_rows.empty()) throw Error("update loss: empty transfer set or update batch");
  double total = 0.0;
  nn::Vec g;
  auto term = [&](double weight, auto&& eval) {
    if (weight == 0.0) return;
    if (grad) {
      g.setZero(student.params().size());
      total += weight * eval(&g);
      *grad += weight * g;
    } else {
      total += weight * eval(nullptr);
    }
  };
  term(alpha * lambda, [&](nn::Vec* gg) { return student.distill_loss(teacher, tr, tr_rows, gg, noise_seed); });
  term(alpha * (1.0 - lambda), [&](nn::Vec* gg) { return student.loss(tr, tr_rows, gg, noise_seed); });
  term(1.0 - alpha, [&](nn::Vec* gg) { return student.loss(up, up_rows, gg, noise_seed ^ 0x5bd1e995ULL); });
  return total;
}

double total_update_loss(const LearnedModel& teacher, const LearnedModel& student, const TransferSet& tr,
                         const Table& up, double alpha, double lambda, std::uint64_t noise_seed) {
  const auto a = all_rows(tr.data.row_count());
  const auto b = all_rows(up.row_count());
  return total_update_loss(teacher, student, tr.data, a, up, b, alpha, lambda, nullptr, noise_seed);
}

UpdateOutcome distill_update(const LearnedModel& teacher, const TransferSet& tr, const InsertionBatch& up,
                             const DistillConfig& cfg, std::size_t history_rows) {
  cfg.validate();
  if (tr.data.empty() || up.data.empty()) throw Error("distill_update: empty transfer set or update batch");
  const auto t0 = std::chrono::steady_clock::now();
  UpdateOutcome out;
  out.branch = Branch::distill;
  out.new_model = teacher.clone();
  LearnedModel& student = *out.new_model;
  student.set_distill_temperature(cfg.temperature);

  const double alpha = resolve_alpha(cfg, history_rows, up.data.row_count());
  const std::size_t ntr = tr.data.row_count(), nup = up.data.row_count();
  const std::size_t steps =
      std::max<std::size_t>(1, (ntr + nup + static_cast<std::size_t>(cfg.batch_size) - 1) / cfg.batch_size);
  const std::size_t btr = (ntr + steps - 1) / steps, bup = (nup + steps - 1) / steps;

  nn::RmsProp opt(static_cast<std::size_t>(student.params().size()), cfg.lr);
  nn::Vec grad(student.params().size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto ptr = seeded_permutation(ntr, cfg.seed * 7919 + 2 * epoch);
    const auto pup = seeded_permutation(nup, cfg.seed * 7919 + 2 * epoch + 1);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t a0 = std::min(ntr, s * btr), a1 = std::min(ntr, a0 + btr);
      const std::size_t b0 = std::min(nup, s * bup), b1 = std::min(nup, b0 + bup);
      if (a0 == a1 || b0 == b1) continue;
      grad.setZero();
      const double l = total_update_loss(teacher, student, tr.data, {ptr.data() + a0, a1 - a0}, up.data,
                                         {pup.data() + b0, b1 - b0}, alpha, cfg.lambda, &grad,
                                         cfg.seed ^ (static_cast<std::uint64_t>(epoch) << 32) ^ s);
      if (!std::isfinite(l) || !grad.allFinite())
        throw Error("distill_update diverged: non-finite loss at epoch " + std::to_string(epoch + 1));
      student.restrict_update_gradient(grad);
      opt.step(student.params(), grad);
      sum += l;
      ++count;
    }
    out.loss_trace.push_back(count ? sum / count : 0.0);
    const int k = cfg.early_stop_patience;
    if (k > 0 && static_cast<int>(out.loss_trace.size()) > k) {
      const double before = out.loss_trace[out.loss_trace.size() - 1 - k];
      if (before - out.loss_trace.back() < cfg.early_stop_tol * std::abs(before)) break;
    }
  }
  out.wall_time = seconds_since(t0);
  return out;
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json j{{"distill", distill.to_json()},
                   {"train", train.to_json()},
                   {"fine_tune_on_ind", fine_tune_on_ind},
                   {"n_resamples", n_resamples},
                   {"threshold_mult", threshold_mult},
                   {"test_fraction", test_fraction},
                   {"history_cap", history_cap},
                   {"seed", seed}};
  j["resample_size"] = resample_size ? nlohmann::json(*resample_size) : nlohmann::json(nullptr);
  return j;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig c;
  if (j.contains("distill")) c.distill = DistillConfig::from_json(j.at("distill"));
  if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  c.fine_tune_on_ind = j.value("fine_tune_on_ind", c.fine_tune_on_ind);
  c.n_resamples = j.value("n_resamples", c.n_resamples);
  if (j.contains("resample_size") && !j.at("resample_size").is_null())
    c.resample_size = j.at("resample_size").get<std::size_t>();
  c.threshold_mult = j.value("threshold_mult", c.threshold_mult);
  c.test_fraction = j.value("test_fraction", c.test_fraction);
  c.history_cap = j.value("history_cap", c.history_cap);
  c.seed = j.value("seed", c.seed);
  if (c.n_resamples < 2) throw Error("pipeline: n_resamples must be at least 2");
  if (!(c.test_fraction > 0.0 && c.test_fraction <= 1.0)) throw Error("pipeline: test_fraction must be in (0, 1]");
  return c;
}

nlohmann::json StepReport::to_json() const {
  const std::size_t tail = std::min<std::size_t>(5, loss_trace.size());
  return {{"t", t},
          {"branch", std::string(to_string(branch))},
          {"d", test.d},
          {"threshold", test.threshold},
          {"decision", std::string(to_string(test.decision))},
          {"wall_time", wall_time},
          {"detect_time", detect_time},
          {"loss_trace_tail", std::vector<double>(loss_trace.end() - static_cast<std::ptrdiff_t>(tail), loss_trace.end())}};
}

namespace {

void refresh(PipelineState& s, const PipelineConfig& cfg, std::uint64_t seed) {
  const auto n_tr = std::min(s.history.row_count(),
                             std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                                          cfg.distill.transfer_fraction * s.history_rows))));
  s.tr = {sample_rows(s.history, n_tr, seed), s.t};
  const auto size = cfg.resample_size ? *cfg.resample_size : default_resample_size(s.history_rows);
  s.detector = offline_calibrate(*s.model, s.history, cfg.n_resamples, size, seed + 1, cfg.threshold_mult, s.t);
}

}  // namespace

PipelineState start_pipeline(ModelPtr trained, const Table& base, const PipelineConfig& cfg) {
  if (!trained) throw Error("pipeline: no model");
  if (base.empty()) throw Error("pipeline: empty base table");
  PipelineState s;
  s.model = std::move(trained);
  s.history_rows = base.row_count();
  s.history = base.row_count() <= cfg.history_cap ? base : sample_rows(base, cfg.history_cap, cfg.seed);
  refresh(s, cfg, cfg.seed);
  return s;
}

StepReport pipeline_step(PipelineState& s, const InsertionBatch& batch, const PipelineConfig& cfg) {
  if (batch.data.empty()) throw Error("pipeline: empty insertion batch");
  if (batch.t <= s.t) throw Error("pipeline: timesteps must strictly increase");
  const std::uint64_t seed = cfg.seed + 1000003ULL * static_cast<std::uint64_t>(batch.t);
  StepReport rep;
  rep.t = batch.t;

  auto t0 = std::chrono::steady_clock::now();
  const auto n_test = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(cfg.test_fraction * batch.data.row_count())));
  rep.test = online_test(s.detector, *s.model, sample_rows(batch.data, n_test, seed));
  rep.detect_time = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  if (rep.test.decision == Decision::ood) {
    auto out = distill_update(*s.model, s.tr, batch, cfg.distill, s.history_rows);
    s.model = std::move(out.new_model);
    rep.loss_trace = std::move(out.loss_trace);
    rep.branch = Branch::distill;
  } else {
    if (cfg.fine_tune_on_ind)
      rep.loss_trace = fine_tune(*s.model, batch.data, s.history_rows, batch.data.row_count(), cfg.train).epoch_loss;
    rep.branch = Branch::fine_tune;
  }
  s.model->absorb_metadata(batch.data);
  rep.wall_time = seconds_since(t0);

  const std::size_t total = s.history_rows + batch.data.row_count();
  if (s.history.row_count() + batch.data.row_count() <= cfg.history_cap) {
    s.history = Table::concat(s.history, batch.data);
  } else {
    const auto keep_new = std::min(batch.data.row_count(),
                                   static_cast<std::size_t>(std::llround(static_cast<double>(cfg.history_cap) *
                                                                         batch.data.row_count() / total)));
    const auto keep_old = std::min(s.history.row_count(), cfg.history_cap - keep_new);
    s.history = Table::concat(sample_rows(s.history, keep_old, seed + 2), sample_rows(batch.data, keep_new, seed + 3));
  }
  s.history_rows = total;
  s.t = batch.t;
  refresh(s, cfg, seed + 4);
  return rep;
}

}  // namespace ddup
