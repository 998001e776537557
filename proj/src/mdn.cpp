#include "ddup/mdn.hpp"

#include <cmath>
#include <iostream>
#include <numbers>

#include "ddup/losses.hpp"

namespace ddup {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double normal_pdf(double z) { return std::exp(-0.5 * z * z - kLogSqrt2Pi); }

}  // namespace

double GaussianMixture::pdf(double y) const {
  double p = 0.0;
  for (std::size_t i = 0; i < weight.size(); ++i) p += weight[i] * normal_pdf((y - mean[i]) / stddev[i]) / stddev[i];
  return p;
}

double GaussianMixture::cdf(double y) const {
  double p = 0.0;
  for (std::size_t i = 0; i < weight.size(); ++i) p += weight[i] * normal_cdf((y - mean[i]) / stddev[i]);
  return p;
}

double GaussianMixture::mass(double lb, double ub) const {
  if (ub < lb) return 0.0;
  double p = 0.0;
  for (std::size_t i = 0; i < weight.size(); ++i)
    p += weight[i] * (normal_cdf((ub - mean[i]) / stddev[i]) - normal_cdf((lb - mean[i]) / stddev[i]));
  return std::max(0.0, p);
}

double GaussianMixture::first_moment(double lb, double ub) const {
  if (ub < lb) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    const double a = (lb - mean[i]) / stddev[i];
    const double b = (ub - mean[i]) / stddev[i];
    s += weight[i] * (mean[i] * (normal_cdf(b) - normal_cdf(a)) - stddev[i] * (normal_pdf(b) - normal_pdf(a)));
  }
  return s;
}

std::vector<double> GaussianMixture::sample(std::size_t n, std::mt19937_64& rng) const {
  std::discrete_distribution<std::size_t> pick(weight.begin(), weight.end());
  std::normal_distribution<double> g;
  std::vector<double> out(n);
  for (auto& v : out) {
    const auto i = pick(rng);
    v = mean[i] + stddev[i] * g(rng);
  }
  return out;
}

nlohmann::json MdnConfig::to_json() const {
  return {{"components", components}, {"hidden", hidden}, {"sigma_floor", sigma_floor},
          {"temperature", temperature}, {"seed", seed}};
}

MdnConfig MdnConfig::from_json(const nlohmann::json& j) {
  MdnConfig c;
  c.components = j.value("components", c.components);
  c.hidden = j.value("hidden", c.hidden);
  c.sigma_floor = j.value("sigma_floor", c.sigma_floor);
  c.temperature = j.value("temperature", c.temperature);
  c.seed = j.value("seed", c.seed);
  return c;
}

FrequencyTable FrequencyTable::of(const Table& t, std::size_t column) {
  FrequencyTable f(t.schema()[column].categories.size());
  f.add(t, column);
  return f;
}

void FrequencyTable::add(const Table& t, std::size_t column) {
  if (!t.schema()[column].is_categorical()) throw Error("frequency table needs a categorical column");
  if (counts_.size() < t.schema()[column].categories.size()) counts_.resize(t.schema()[column].categories.size(), 0);
  for (auto c : t.codes(column)) ++counts_[static_cast<std::size_t>(c)];
  total_ += static_cast<std::int64_t>(t.row_count());
}

nlohmann::json FrequencyTable::to_json() const { return {{"counts", counts_}, {"total", total_}}; }

FrequencyTable FrequencyTable::from_json(const nlohmann::json& j) {
  FrequencyTable f;
  f.counts_ = j.at("counts").get<std::vector<std::int64_t>>();
  f.total_ = j.at("total").get<std::int64_t>();
  std::int64_t sum = 0;
  for (auto c : f.counts_) {
    if (c < 0) throw Error("frequency table: negative count");
    sum += c;
  }
  if (sum != f.total_) throw Error("frequency table: total does not match the counts");
  return f;
}

MdnModel::MdnModel(Schema schema, std::string_view x_column, std::string_view y_column, MdnConfig cfg)
    : schema_(std::move(schema)), cfg_(std::move(cfg)) {
  x_ = schema_.index_of(x_column);
  y_ = schema_.index_of(y_column);
  if (!schema_[x_].is_categorical()) throw Error("mdn: x column must be categorical");
  if (schema_[y_].is_categorical()) throw Error("mdn: y column must be numeric");
  if (cfg_.components < 1) throw Error("mdn: need at least one component");
  if (!(cfg_.sigma_floor > 0.0)) throw Error("mdn: sigma floor must be positive");
  const double lo = schema_[y_].min, hi = schema_[y_].max;
  if (!(hi > lo)) throw Error("mdn: y column needs a nonempty range");
  y_mid_ = 0.5 * (lo + hi);
  y_half_ = 0.5 * (hi - lo);

  std::vector<int> sizes{categories()};
  sizes.insert(sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  sizes.push_back(3 * cfg_.components);
  net_ = nn::Mlp(sizes, nn::Activation::tanh, 0);
  params_ = nn::Vec::Zero(static_cast<Eigen::Index>(net_.end()));
  std::mt19937_64 rng(cfg_.seed);
  net_.init(params_, rng);
  // spread the component means over the scaled range and start with moderate widths
  const auto& out = net_.layers().back();
  const int m = cfg_.components;
  for (int i = 0; i < m; ++i) {
    params_[out.b_offset + m + i] = m == 1 ? 0.0 : -0.8 + 1.6 * i / (m - 1);
    params_[out.b_offset + 2 * m + i] = std::log(std::expm1(0.2));
  }
  freq_ = FrequencyTable(static_cast<std::size_t>(categories()));
}

nn::SparseInput MdnModel::encode(const Table& data, std::span<const std::size_t> rows) const {
  if (!(data.schema() == schema_)) throw Error("mdn: table schema does not match the model");
  nn::SparseInput in;
  in.rows = static_cast<int>(rows.size());
  in.width = categories();
  in.per_row = 1;
  in.active.resize(rows.size());
  const auto codes = data.codes(x_);
  for (std::size_t r = 0; r < rows.size(); ++r) in.active[r] = codes[rows[r]];
  return in;
}

MdnModel::Heads MdnModel::split(const nn::Mat& out) const {
  const int m = cfg_.components;
  Heads h;
  h.logits = out.leftCols(m);
  h.mu = out.middleCols(m, m);
  h.raw = out.rightCols(m);
  h.sigma = h.raw.unaryExpr([&](double v) { return softplus(v) + cfg_.sigma_floor; });
  return h;
}

Eigen::VectorXd MdnModel::heads(std::int32_t x) const {
  if (x < 0 || x >= categories()) throw Error("mdn: unknown category code " + std::to_string(x));
  nn::SparseInput in{1, categories(), 1, {x}};
  return net_.forward(params_, in).row(0).transpose();
}

GaussianMixture MdnModel::conditional(std::int32_t x) const {
  const Eigen::VectorXd o = heads(x);
  const int m = cfg_.components;
  const Eigen::VectorXd w = softmax(o.head(m));
  GaussianMixture g;
  for (int i = 0; i < m; ++i) {
    g.weight.push_back(w[i]);
    g.mean.push_back(unscale_y(o[m + i]));
    g.stddev.push_back((softplus(o[2 * m + i]) + cfg_.sigma_floor) * y_half_);
  }
  return g;
}

double MdnModel::loss(const Table& data, std::span<const std::size_t> rows, nn::Vec* grad,
                      std::uint64_t) const {
  if (rows.empty()) throw Error("mdn: empty batch");
  const auto in = encode(data, rows);
  nn::Mlp::Cache cache;
  const nn::Mat out = net_.forward(params_, in, grad ? &cache : nullptr);
  const Heads h = split(out);
  const int m = cfg_.components;
  const auto n = static_cast<double>(rows.size());
  nn::Mat d_out = nn::Mat::Zero(out.rows(), out.cols());
  Eigen::VectorXd logc(m), z(m);
  double total = 0.0;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double y = scale_y(data.value(rows[r], y_));
    const double amax = h.logits.row(r).maxCoeff();
    const double alse = amax + std::log((h.logits.row(r).array() - amax).exp().sum());
    for (int i = 0; i < m; ++i) {
      z[i] = (y - h.mu(r, i)) / h.sigma(r, i);
      logc[i] = h.logits(r, i) - alse - 0.5 * z[i] * z[i] - std::log(h.sigma(r, i)) - kLogSqrt2Pi;
    }
    const double cmax = logc.maxCoeff();
    const double lse = cmax + std::log((logc.array() - cmax).exp().sum());
    total -= lse;
    if (grad) {
      for (int i = 0; i < m; ++i) {
        const double gamma = std::exp(logc[i] - lse);
        const double omega = std::exp(h.logits(r, i) - alse);
        const double s = h.sigma(r, i);
        d_out(r, i) = (omega - gamma) / n;
        d_out(r, m + i) = -gamma * z[i] / s / n;
        d_out(r, 2 * m + i) = gamma * (1.0 - z[i] * z[i]) / s * sigmoid(h.raw(r, i)) / n;
      }
    }
  }
  if (grad) net_.backward(params_, cache, d_out, *grad);
  return total / n;
}

std::vector<double> MdnModel::per_example_loss(const Table& data) const {
  if (!(data.schema() == schema_)) throw Error("mdn: table schema does not match the model");
  std::vector<GaussianMixture> cond;
  cond.reserve(static_cast<std::size_t>(categories()));
  for (int c = 0; c < categories(); ++c) cond.push_back(conditional(c));
  std::vector<double> out(data.row_count());
  const auto codes = data.codes(x_);
  const auto ys = data.reals(y_);
  const double log_half = std::log(y_half_);
  for (std::size_t r = 0; r < out.size(); ++r) {
    // density of the scaled value = raw density * half range
    out[r] = -(std::log(cond[static_cast<std::size_t>(codes[r])].pdf(ys[r])) + log_half);
  }
  return out;
}

double MdnModel::distill_loss(const LearnedModel& teacher, const Table& data, std::span<const std::size_t> rows,
                              nn::Vec* grad, std::uint64_t) const {
  const auto* t = dynamic_cast<const MdnModel*>(&teacher);
  if (!t) throw Error("mdn distillation needs an mdn teacher");
  if (t->cfg_.components != cfg_.components) throw Error("mdn distillation: component count mismatch");
  if (t->x_ != x_ || t->y_ != y_ || !(t->schema_ == schema_)) throw Error("mdn distillation: column mismatch");
  if (rows.empty()) throw Error("mdn: empty transfer batch");
  const auto in = encode(data, rows);
  const Heads ht = t->split(t->net_.forward(t->params_, in));
  nn::Mlp::Cache cache;
  const nn::Mat out = net_.forward(params_, in, grad ? &cache : nullptr);
  const Heads hs = split(out);
  const int m = cfg_.components;
  const auto n = static_cast<double>(rows.size());
  nn::Mat d_out = nn::Mat::Zero(out.rows(), out.cols());
  Eigen::VectorXd g(m);
  double total = 0.0;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    g.setZero();
    const Eigen::VectorXd lt = ht.logits.row(r).transpose(), ls = hs.logits.row(r).transpose();
    total += annealed_ce(lt, ls, cfg_.temperature, g);
    total += (ht.mu.row(r) - hs.mu.row(r)).squaredNorm() + (ht.sigma.row(r) - hs.sigma.row(r)).squaredNorm();
    if (grad) {
      d_out.row(r).head(m) = g.transpose() / n;
      d_out.row(r).segment(m, m) = 2.0 * (hs.mu.row(r) - ht.mu.row(r)) / n;
      for (int i = 0; i < m; ++i)
        d_out(r, 2 * m + i) = 2.0 * (hs.sigma(r, i) - ht.sigma(r, i)) * sigmoid(hs.raw(r, i)) / n;
    }
  }
  if (grad) net_.backward(params_, cache, d_out, *grad);
  return total / n;
}

nlohmann::json MdnModel::to_json() const {
  return {{"schema", schema_.to_json()},      {"x", schema_[x_].name},
          {"y", schema_[y_].name},            {"config", cfg_.to_json()},
          {"frequencies", freq_.to_json()},   {"params", params_to_json(params_)}};
}

std::unique_ptr<MdnModel> MdnModel::from_json(const nlohmann::json& j) {
  auto m = std::make_unique<MdnModel>(Schema::from_json(j.at("schema")), j.at("x").get<std::string>(),
                                      j.at("y").get<std::string>(), MdnConfig::from_json(j.at("config")));
  m->params_ = params_from_json(j.at("params"), static_cast<std::size_t>(m->params_.size()));
  m->freq_ = FrequencyTable::from_json(j.at("frequencies"));
  return m;
}

double mdn_pdf(const MdnModel& model, std::string_view x, double y) {
  const auto code = model.schema().code_of(model.x_column(), x);
  if (!code) throw Error("mdn: unknown category '" + std::string(x) + "'");
  return model.conditional(*code).pdf(y);
}

namespace {

std::optional<std::int32_t> lookup(const MdnModel& model, std::string_view x_eq, double lb, double ub) {
  if (lb > ub) throw Error("aqp: lower bound exceeds upper bound");
  auto code = model.schema().code_of(model.x_column(), x_eq);
  if (!code) std::cerr << "warning: aqp on unknown category '" << x_eq << "', returning 0\n";
  return code;
}

}  // namespace

double aqp_count(const MdnModel& model, const FrequencyTable& ft, std::string_view x_eq, double lb, double ub) {
  const auto code = lookup(model, x_eq, lb, ub);
  if (!code) return 0.0;
  return static_cast<double>(ft.count(*code)) * model.conditional(*code).mass(lb, ub);
}

double aqp_sum(const MdnModel& model, const FrequencyTable& ft, std::string_view x_eq, double lb, double ub) {
  const auto code = lookup(model, x_eq, lb, ub);
  if (!code) return 0.0;
  return static_cast<double>(ft.count(*code)) * model.conditional(*code).first_moment(lb, ub);
}

double aqp_avg(const MdnModel& model, const FrequencyTable& ft, std::string_view x_eq, double lb, double ub) {
  const double count = aqp_count(model, ft, x_eq, lb, ub);
  if (!(count > 1e-9)) throw Error("aqp: AVG undefined, COUNT estimate is zero");
  return aqp_sum(model, ft, x_eq, lb, ub) / count;
}

double aqp_estimate(const MdnModel& model, const Query& query) {
  const auto& schema = model.schema();
  query.validate(schema);
  std::optional<std::int32_t> x;
  double lb = schema[model.y_column()].min, ub = schema[model.y_column()].max;
  for (const auto& f : query.filters) {
    if (f.column == model.x_column() && f.op == Op::eq) {
      x = static_cast<std::int32_t>(f.value);
    } else if (f.column == model.y_column() && f.op != Op::eq) {
      (f.op == Op::ge ? lb : ub) = f.value;
    } else {
      throw Error("aqp: the model answers one equality on '" + schema[model.x_column()].name +
                  "' plus a range on '" + schema[model.y_column()].name + "'");
    }
  }
  if (!x) throw Error("aqp: missing equality filter on '" + schema[model.x_column()].name + "'");
  if (query.agg != Agg::count && query.agg_column != model.y_column())
    throw Error("aqp: SUM and AVG aggregate '" + schema[model.y_column()].name + "'");
  const auto& label = schema[model.x_column()].categories.at(static_cast<std::size_t>(*x));
  const auto& ft = model.frequencies();
  switch (query.agg) {
    case Agg::count: return aqp_count(model, ft, label, lb, ub);
    case Agg::sum: return aqp_sum(model, ft, label, lb, ub);
    case Agg::avg: return aqp_avg(model, ft, label, lb, ub);
  }
  return 0.0;
}

}  // namespace ddup
