#include "ddup/model.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ddup/darn.hpp"
#include "ddup/mdn.hpp"
#include "ddup/tvae.hpp"

namespace ddup {

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_config(const TrainConfig& cfg, double lr) {
  if (cfg.epochs < 1) throw Error("train: epochs must be positive");
  if (cfg.batch_size < 1) throw Error("train: batch_size must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw Error("train: learning rate must be positive");
  if (cfg.weight_penalty < 0.0) throw Error("train: weight_penalty must be non-negative");
}

}  // namespace

std::string_view to_string(TaskTag task) {
  switch (task) {
    case TaskTag::aqp: return "aqp";
    case TaskTag::ce: return "ce";
    case TaskTag::dg: return "dg";
  }
  return "?";
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"base_lr", base_lr},
          {"weight_penalty", weight_penalty},
          {"seed", seed},
          {"early_stop_tol", early_stop_tol},
          {"early_stop_patience", early_stop_patience}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.base_lr = j.value("base_lr", c.base_lr);
  c.weight_penalty = j.value("weight_penalty", c.weight_penalty);
  c.seed = j.value("seed", c.seed);
  c.early_stop_tol = j.value("early_stop_tol", c.early_stop_tol);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  return c;
}

TrainStats train(LearnedModel& model, const Table& data, const TrainConfig& cfg) {
  auto stats = train_at_lr(model, data, cfg, cfg.base_lr, true);
  model.reset_metadata(data);
  return stats;
}

TrainStats train_at_lr(LearnedModel& model, const Table& data, const TrainConfig& cfg, double lr,
                       bool early_stop) {
  if (data.empty()) throw Error("train: empty training table");
  if (!(data.schema() == model.schema())) throw Error("train: table schema does not match the model");
  check_config(cfg, lr);

  const auto start = std::chrono::steady_clock::now();
  TrainStats stats;
  stats.lr = lr;
  nn::Vec& theta = model.params();
  nn::RmsProp opt(static_cast<std::size_t>(theta.size()), lr);
  nn::Vec grad(theta.size());
  const std::size_t n = data.row_count();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = seeded_permutation(n, mix64(cfg.seed * 1000003ULL + epoch));
    double total = 0.0;
    for (std::size_t b = 0; b < n; b += bs) {
      const std::size_t e = std::min(n, b + bs);
      std::span<const std::size_t> rows(order.data() + b, e - b);
      grad.setZero();
      double l = model.loss(data, rows, &grad, mix64(cfg.seed ^ (epoch * 0x100000001b3ULL + b)));
      if (cfg.weight_penalty > 0.0) {
        l += 0.5 * cfg.weight_penalty * theta.squaredNorm();
        grad += cfg.weight_penalty * theta;
      }
      if (!std::isfinite(l) || !grad.allFinite())
        throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1));
      opt.step(theta, grad);
      total += l * static_cast<double>(e - b);
    }
    stats.epoch_loss.push_back(total / static_cast<double>(n));
    const int k = cfg.early_stop_patience;
    if (early_stop && k > 0 && static_cast<int>(stats.epoch_loss.size()) > k) {
      const double before = stats.epoch_loss[stats.epoch_loss.size() - 1 - k];
      const double now = stats.epoch_loss.back();
      if (before - now < cfg.early_stop_tol * std::abs(before)) break;
    }
  }
  stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

LossReport batch_loss(const LearnedModel& model, const Table& data, bool keep_per_example) {
  if (data.empty()) throw Error("batch_loss: empty table");
  LossReport r;
  auto per = model.per_example_loss(data);
  r.mean_loss = std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
  if (keep_per_example) r.per_example = std::move(per);
  return r;
}

double fine_tune_lr(double base_lr, std::size_t old_size, std::size_t new_size) {
  if (old_size == 0) throw Error("fine_tune: old_size must be positive");
  return static_cast<double>(new_size) / static_cast<double>(old_size) * base_lr;
}

TrainStats fine_tune(LearnedModel& model, const Table& new_data, std::size_t old_size,
                     std::size_t new_size, const TrainConfig& cfg) {
  return train_at_lr(model, new_data, cfg, fine_tune_lr(cfg.base_lr, old_size, new_size), true);
}

ModelPtr clone_model(const LearnedModel& model) { return model.clone(); }

nlohmann::json params_to_json(const nn::Vec& params) {
  return std::vector<double>(params.data(), params.data() + params.size());
}

nn::Vec params_from_json(const nlohmann::json& j, std::size_t expected) {
  if (!j.is_array()) throw Error("corrupt checkpoint: parameters are not an array");
  if (j.size() != expected)
    throw Error("corrupt checkpoint: expected " + std::to_string(expected) + " parameters, found " +
                std::to_string(j.size()));
  nn::Vec v(static_cast<Eigen::Index>(expected));
  for (std::size_t i = 0; i < expected; ++i) {
    if (!j[i].is_number()) throw Error("corrupt checkpoint: non-numeric parameter");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

void save_model(const LearnedModel& model, const std::string& path) {
  nlohmann::json doc{{"format", "ddup-checkpoint"}, {"version", 1}, {"arch", model.arch()},
                     {"task", std::string(to_string(model.task()))}, {"model", model.to_json()}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out << doc.dump() << '\n';
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
}

ModelPtr load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error("corrupt checkpoint '" + path + "': " + e.what());
  }
  return model_from_json(doc);
}

ModelPtr model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", std::string()) != "ddup-checkpoint")
      throw Error("corrupt checkpoint: not a ddup checkpoint");
    if (doc.value("version", 0) != 1) throw Error("unsupported checkpoint version");
    const auto arch = doc.at("arch").get<std::string>();
    const auto& body = doc.at("model");
    if (arch == "mdn") return MdnModel::from_json(body);
    if (arch == "darn") return DarnModel::from_json(body);
    if (arch == "tvae") return TvaeModel::from_json(body);
    throw Error("corrupt checkpoint: unknown architecture '" + arch + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("corrupt checkpoint: ") + e.what());
  }
}

std::uint64_t row_seed(const Table& data, std::size_t row, std::uint64_t salt) {
  std::uint64_t h = mix64(salt);
  for (std::size_t c = 0; c < data.column_count(); ++c)
    h = mix64(h ^ std::bit_cast<std::uint64_t>(data.value(row, c)));
  return h;
}

}  // namespace ddup
