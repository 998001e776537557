#include "ddup/tvae.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ddup {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<ColumnTransform> fit_transforms(const Table& t) {
  std::vector<ColumnTransform> cols(t.column_count());
  for (std::size_t c = 0; c < t.column_count(); ++c) {
    auto& ct = cols[c];
    const auto& spec = t.schema()[c];
    ct.categorical = spec.is_categorical();
    if (ct.categorical) {
      ct.support.assign(spec.categories.size(), 0);
      for (auto code : t.codes(c)) ct.support[static_cast<std::size_t>(code)] = 1;
    } else {
      const auto v = t.reals(c);
      const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      ct.lo = *lo;
      ct.hi = *hi;
    }
  }
  return cols;
}

}  // namespace

nlohmann::json TvaeConfig::to_json() const {
  return {{"latent", latent},
          {"hidden", hidden},
          {"sigma_floor", sigma_floor},
          {"distill_encoder", distill_encoder},
          {"seed", seed}};
}

TvaeConfig TvaeConfig::from_json(const nlohmann::json& j) {
  TvaeConfig c;
  c.latent = j.value("latent", c.latent);
  c.hidden = j.value("hidden", c.hidden);
  c.sigma_floor = j.value("sigma_floor", c.sigma_floor);
  c.distill_encoder = j.value("distill_encoder", c.distill_encoder);
  c.seed = j.value("seed", c.seed);
  return c;
}

double shared_noise_mse(const nn::Mat& enc_teacher, const nn::Mat& enc_student, const nn::Mat& dec_teacher,
                        const nn::Mat& dec_student) {
  if (enc_teacher.rows() == 0) throw Error("distillation over an empty transfer batch");
  const double s = (enc_teacher - enc_student).squaredNorm() + (dec_teacher - dec_student).squaredNorm();
  return 0.5 * s / static_cast<double>(enc_teacher.rows());
}

double gaussian_kl(const Eigen::Ref<const Eigen::VectorXd>& mu, const Eigen::Ref<const Eigen::VectorXd>& log_sigma) {
  return 0.5 * (mu.array().square() + (2.0 * log_sigma.array()).exp() - 1.0 - 2.0 * log_sigma.array()).sum();
}

TvaeModel::TvaeModel(const Table& fit_data, TvaeConfig cfg)
    : TvaeModel(fit_data.schema(), fit_transforms(fit_data), std::move(cfg)) {
  if (fit_data.empty()) throw Error("tvae: cannot fit column transforms on an empty table");
}

TvaeModel::TvaeModel(Schema schema, std::vector<ColumnTransform> cols, TvaeConfig cfg)
    : schema_(std::move(schema)), cfg_(std::move(cfg)), cols_(std::move(cols)) {
  if (cols_.size() != schema_.size()) throw Error("tvae: column transforms do not match the schema");
  if (cfg_.latent < 1) throw Error("tvae: latent dimension must be positive");
  for (std::size_t c = 0; c < cols_.size(); ++c) {
    auto& ct = cols_[c];
    ct.in_offset = in_width_;
    ct.out_offset = out_width_;
    if (ct.categorical) {
      ct.in_width = ct.out_width = static_cast<int>(schema_[c].categories.size());
      if (ct.support.size() != schema_[c].categories.size()) throw Error("tvae: category support size mismatch");
    } else {
      ct.in_width = 1;
      ct.out_width = 2;
    }
    in_width_ += ct.in_width;
    out_width_ += ct.out_width;
  }
  build_networks();
}

void TvaeModel::build_networks() {
  std::vector<int> es{in_width_};
  es.insert(es.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  es.push_back(2 * cfg_.latent);
  enc_ = nn::Mlp(es, nn::Activation::relu, 0);
  std::vector<int> ds{cfg_.latent};
  ds.insert(ds.end(), cfg_.hidden.rbegin(), cfg_.hidden.rend());
  ds.push_back(out_width_);
  dec_ = nn::Mlp(ds, nn::Activation::relu, enc_.end());
  params_ = nn::Vec::Zero(static_cast<Eigen::Index>(dec_.end()));
  std::mt19937_64 rng(cfg_.seed);
  enc_.init(params_, rng);
  dec_.init(params_, rng);
}

nn::Mat TvaeModel::encode_input(const Table& data, std::span<const std::size_t> rows) const {
  if (!(data.schema() == schema_)) throw Error("tvae: table schema does not match the model");
  nn::Mat x = nn::Mat::Zero(static_cast<Eigen::Index>(rows.size()), in_width_);
  for (std::size_t c = 0; c < cols_.size(); ++c) {
    const auto& ct = cols_[c];
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (ct.categorical)
        x(static_cast<Eigen::Index>(r), ct.in_offset + data.codes(c)[rows[r]]) = 1.0;
      else
        x(static_cast<Eigen::Index>(r), ct.in_offset) = ct.scale(data.reals(c)[rows[r]]);
    }
  }
  return x;
}

nn::Mat TvaeModel::row_noise(const Table& data, std::span<const std::size_t> rows, std::uint64_t salt) const {
  nn::Mat eps(static_cast<Eigen::Index>(rows.size()), cfg_.latent);
  std::normal_distribution<double> g;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::mt19937_64 rng(row_seed(data, rows[r], salt));
    for (int k = 0; k < cfg_.latent; ++k) eps(static_cast<Eigen::Index>(r), k) = g(rng);
  }
  return eps;
}

namespace {

/// Negative ELBO per row; accumulates the mean's gradient when `grad` is set.
double elbo_pass(const TvaeModel& m, const Table& data, std::span<const std::size_t> rows, std::uint64_t salt,
                 nn::Vec* grad, std::vector<double>* per_row) {
  const auto& theta = m.params();
  const auto& cols = m.transforms();
  const int lat = m.config().latent;
  const double floor = m.config().sigma_floor;
  const nn::Mat x = m.encode_input(data, rows);
  const nn::Mat eps = m.row_noise(data, rows, salt);
  nn::Mlp::Cache ce, cd;
  const nn::Mat e = m.encoder().forward(theta, x, grad ? &ce : nullptr);
  const nn::Mat mu = e.leftCols(lat);
  const nn::Mat ls = e.rightCols(lat);
  const nn::Mat sz = ls.array().exp().matrix();
  const nn::Mat z = mu + sz.cwiseProduct(eps);
  const nn::Mat d = m.decoder().forward(theta, z, grad ? &cd : nullptr);
  const auto n = static_cast<Eigen::Index>(rows.size());
  nn::Mat dd;
  if (grad) dd = nn::Mat::Zero(n, d.cols());

  double total = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    double rec = 0.0;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto& ct = cols[c];
      if (ct.categorical) {
        const auto blk = d.row(r).segment(ct.out_offset, ct.out_width);
        const double mx = blk.maxCoeff();
        const double lse = mx + std::log((blk.array() - mx).exp().sum());
        const int target = data.codes(c)[rows[r]];
        rec += lse - blk[target];
        if (grad) {
          dd.row(r).segment(ct.out_offset, ct.out_width) = (blk.array() - lse).exp().matrix();
          dd(r, ct.out_offset + target) -= 1.0;
        }
      } else {
        const double mean = d(r, ct.out_offset);
        const double raw = d(r, ct.out_offset + 1);
        const double s = softplus(raw) + floor;
        const double u = (ct.scale(data.reals(c)[rows[r]]) - mean) / s;
        rec += 0.5 * u * u + std::log(s) + kLogSqrt2Pi;
        if (grad) {
          dd(r, ct.out_offset) = -u / s;
          dd(r, ct.out_offset + 1) = (1.0 - u * u) / s * sigmoid(raw);
        }
      }
    }
    const double kl = gaussian_kl(mu.row(r).transpose(), ls.row(r).transpose());
    if (per_row) per_row->push_back(rec + kl);
    total += rec + kl;
  }
  if (grad) {
    const double inv = 1.0 / static_cast<double>(n);
    dd *= inv;
    nn::Mat dz;
    m.decoder().backward(theta, cd, dd, *grad, &dz);
    nn::Mat de(n, 2 * lat);
    de.leftCols(lat) = dz + mu * inv;
    de.rightCols(lat) = (dz.array() * eps.array() * sz.array() + (sz.array().square() - 1.0) * inv).matrix();
    m.encoder().backward(theta, ce, de, *grad);
  }
  return total / static_cast<double>(n);
}

constexpr std::uint64_t kEvalSalt = 0x7e57ab1eULL;

}  // namespace

double TvaeModel::loss(const Table& data, std::span<const std::size_t> rows, nn::Vec* grad,
                       std::uint64_t noise_seed) const {
  if (rows.empty()) throw Error("tvae: empty batch");
  const double l = elbo_pass(*this, data, rows, noise_seed, grad, nullptr);
  if (!std::isfinite(l)) throw Error("tvae: non-finite ELBO");
  return l;
}

std::vector<double> TvaeModel::per_example_loss(const Table& data) const {
  std::vector<double> out;
  out.reserve(data.row_count());
  constexpr std::size_t chunk = 4096;
  std::vector<std::size_t> rows;
  for (std::size_t b = 0; b < data.row_count(); b += chunk) {
    const std::size_t e = std::min(data.row_count(), b + chunk);
    rows.resize(e - b);
    for (std::size_t r = b; r < e; ++r) rows[r - b] = r;
    elbo_pass(*this, data, rows, kEvalSalt, nullptr, &out);
  }
  return out;
}

double TvaeModel::distill_loss(const LearnedModel& teacher, const Table& data, std::span<const std::size_t> rows,
                               nn::Vec* grad, std::uint64_t noise_seed) const {
  const auto* t = dynamic_cast<const TvaeModel*>(&teacher);
  if (!t) throw Error("tvae distillation needs a tvae teacher");
  if (t->cfg_.latent != cfg_.latent || t->cfg_.hidden != cfg_.hidden || t->in_width_ != in_width_ ||
      t->out_width_ != out_width_)
    throw Error("tvae distillation: architecture mismatch");
  if (rows.empty()) throw Error("tvae: empty transfer batch");
  const int lat = cfg_.latent;
  const nn::Mat x = encode_input(data, rows);
  const nn::Mat eps = row_noise(data, rows, noise_seed);

  const nn::Mat et = t->enc_.forward(t->params_, x);
  const nn::Mat zt = et.leftCols(lat) + (et.rightCols(lat).array().exp() * eps.array()).matrix();
  const nn::Mat dt = t->dec_.forward(t->params_, zt);

  nn::Mlp::Cache ce, cd;
  const nn::Mat es = enc_.forward(params_, x, grad ? &ce : nullptr);
  const nn::Mat sz = es.rightCols(lat).array().exp().matrix();
  const nn::Mat zs = es.leftCols(lat) + sz.cwiseProduct(eps);
  const nn::Mat ds = dec_.forward(params_, zs, grad ? &cd : nullptr);

  const double l = shared_noise_mse(et, es, dt, ds);
  if (grad) {
    const double inv = 1.0 / static_cast<double>(rows.size());
    nn::Mat dz;
    dec_.backward(params_, cd, (ds - dt) * inv, *grad, &dz);
    nn::Mat de = (es - et) * inv;
    de.leftCols(lat) += dz;
    de.rightCols(lat) += (dz.array() * eps.array() * sz.array()).matrix();
    enc_.backward(params_, ce, de, *grad);
  }
  return l;
}

void TvaeModel::restrict_update_gradient(nn::Vec& grad) const {
  if (!cfg_.distill_encoder)
    grad.segment(static_cast<Eigen::Index>(enc_.offset()), static_cast<Eigen::Index>(enc_.param_count())).setZero();
}

Table TvaeModel::sample(std::size_t n, std::uint64_t seed) const {
  TableBuilder builder(schema_);
  if (n == 0) return std::move(builder).build();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  nn::Mat z(static_cast<Eigen::Index>(n), cfg_.latent);
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    for (int k = 0; k < cfg_.latent; ++k) z(r, k) = g(rng);
  const nn::Mat d = decode(z);
  builder.reserve(n);
  std::vector<double> row(cols_.size());
  for (Eigen::Index r = 0; r < d.rows(); ++r) {
    for (std::size_t c = 0; c < cols_.size(); ++c) {
      const auto& ct = cols_[c];
      if (ct.categorical) {
        const auto blk = d.row(r).segment(ct.out_offset, ct.out_width);
        const double mx = blk.maxCoeff();
        Eigen::VectorXd p = (blk.array() - mx).exp().transpose();
        for (int k = 0; k < ct.out_width; ++k)
          if (!ct.support[k]) p[k] = 0.0;
        double u = unif(rng) * p.sum();
        int k = 0;
        for (; k < ct.out_width - 1; ++k) {
          u -= p[k];
          if (u <= 0.0 && p[k] > 0.0) break;
        }
        while (!ct.support[k]) --k;
        row[c] = k;
      } else {
        const double s = softplus(d(r, ct.out_offset + 1)) + cfg_.sigma_floor;
        const double v = ct.unscale(d(r, ct.out_offset) + s * g(rng));
        row[c] = std::clamp(v, ct.lo, ct.hi);
      }
    }
    builder.append(row);
  }
  return std::move(builder).build();
}

nlohmann::json TvaeModel::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& ct : cols_) {
    if (ct.categorical)
      cols.push_back({{"support", std::vector<int>(ct.support.begin(), ct.support.end())}});
    else
      cols.push_back({{"lo", ct.lo}, {"hi", ct.hi}});
  }
  return {{"schema", schema_.to_json()}, {"config", cfg_.to_json()}, {"transforms", cols},
          {"params", params_to_json(params_)}};
}

std::unique_ptr<TvaeModel> TvaeModel::from_json(const nlohmann::json& j) {
  Schema schema = Schema::from_json(j.at("schema"));
  const auto& tj = j.at("transforms");
  if (tj.size() != schema.size()) throw Error("corrupt checkpoint: transform count mismatch");
  std::vector<ColumnTransform> cols(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    cols[c].categorical = schema[c].is_categorical();
    if (cols[c].categorical) {
      const auto s = tj[c].at("support").get<std::vector<int>>();
      cols[c].support.assign(s.begin(), s.end());
    } else {
      cols[c].lo = tj[c].at("lo").get<double>();
      cols[c].hi = tj[c].at("hi").get<double>();
    }
  }
  std::unique_ptr<TvaeModel> m(new TvaeModel(std::move(schema), std::move(cols), TvaeConfig::from_json(j.at("config"))));
  m->params_ = params_from_json(j.at("params"), static_cast<std::size_t>(m->params_.size()));
  return m;
}

Table sample_rows(const TvaeModel& model, std::size_t n, std::uint64_t seed) { return model.sample(n, seed); }

}  // namespace ddup
