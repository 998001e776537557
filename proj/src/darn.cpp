#include "ddup/darn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "ddup/losses.hpp"

namespace ddup {

nlohmann::json DarnConfig::to_json() const {
  return {{"hidden", hidden}, {"temperature", temperature}, {"seed", seed}};
}

DarnConfig DarnConfig::from_json(const nlohmann::json& j) {
  DarnConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.temperature = j.value("temperature", c.temperature);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

std::vector<std::vector<double>> distinct_values(const Table& t) {
  std::vector<std::vector<double>> values(t.column_count());
  for (std::size_t c = 0; c < t.column_count(); ++c) {
    if (t.schema()[c].is_categorical()) continue;
    std::set<double> s(t.reals(c).begin(), t.reals(c).end());
    values[c].assign(s.begin(), s.end());
  }
  return values;
}

}  // namespace

DarnModel::DarnModel(const Table& fit_data, DarnConfig cfg)
    : DarnModel(fit_data.schema(), distinct_values(fit_data), std::move(cfg)) {
  if (fit_data.empty()) throw Error("darn: cannot fit encoders on an empty table");
  rows_ = static_cast<double>(fit_data.row_count());
}

DarnModel::DarnModel(Schema schema, std::vector<std::vector<double>> values, DarnConfig cfg)
    : schema_(std::move(schema)), cfg_(std::move(cfg)), values_(std::move(values)) {
  if (schema_.size() == 0) throw Error("darn: schema has no columns");
  if (values_.size() != schema_.size()) throw Error("darn: encoder state does not match the schema");
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    const int n = schema_[c].is_categorical() ? static_cast<int>(schema_[c].categories.size())
                                              : static_cast<int>(values_[c].size());
    if (n < 1) throw Error("darn: column '" + schema_[c].name + "' has an empty domain");
    offsets_.push_back(width_);
    sizes_.push_back(n);
    width_ += n;
  }
  build_network();
}

void DarnModel::build_network() {
  const int d = static_cast<int>(schema_.size());
  std::vector<int> sizes{width_};
  sizes.insert(sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  sizes.push_back(width_);
  net_ = nn::Mlp(sizes, nn::Activation::relu, 0);

  std::vector<int> unit_degree(static_cast<std::size_t>(width_));
  for (int c = 0; c < d; ++c)
    std::fill_n(unit_degree.begin() + offsets_[c], sizes_[c], c + 1);

  std::vector<std::vector<int>> hidden_degree;
  for (int h : cfg_.hidden) {
    std::vector<int> deg(static_cast<std::size_t>(h));
    for (int k = 0; k < h; ++k) deg[k] = 1 + k % std::max(1, d - 1);
    hidden_degree.push_back(std::move(deg));
  }

  std::vector<Eigen::MatrixXd> masks;
  const std::vector<int>* below = &unit_degree;
  for (const auto& deg : hidden_degree) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(deg.size()), static_cast<Eigen::Index>(below->size()));
    for (std::size_t k = 0; k < deg.size(); ++k)
      for (std::size_t j = 0; j < below->size(); ++j) m(k, j) = deg[k] >= (*below)[j] ? 1.0 : 0.0;
    masks.push_back(std::move(m));
    below = &deg;
  }
  Eigen::MatrixXd out(width_, static_cast<Eigen::Index>(below->size()));
  for (int j = 0; j < width_; ++j)
    for (std::size_t k = 0; k < below->size(); ++k) out(j, k) = unit_degree[j] > (*below)[k] ? 1.0 : 0.0;
  masks.push_back(std::move(out));
  net_.set_masks(std::move(masks));

  params_ = nn::Vec::Zero(static_cast<Eigen::Index>(net_.end()));
  std::mt19937_64 rng(cfg_.seed);
  net_.init(params_, rng);
}

std::int32_t DarnModel::encode(std::size_t col, double value) const {
  if (schema_[col].is_categorical()) {
    const auto code = static_cast<std::int32_t>(value);
    return code >= 0 && code < sizes_[col] && code == value ? code : -1;
  }
  const auto& v = values_[col];
  auto it = std::lower_bound(v.begin(), v.end(), value);
  return it != v.end() && *it == value ? static_cast<std::int32_t>(it - v.begin()) : -1;
}

double DarnModel::decode(std::size_t col, std::int32_t code) const {
  return schema_[col].is_categorical() ? static_cast<double>(code) : values_[col].at(static_cast<std::size_t>(code));
}

nn::SparseInput DarnModel::encode_rows(const Table& data, std::span<const std::size_t> rows) const {
  if (!(data.schema() == schema_)) throw Error("darn: table schema does not match the model");
  const auto d = schema_.size();
  nn::SparseInput in;
  in.rows = static_cast<int>(rows.size());
  in.width = width_;
  in.per_row = static_cast<int>(d);
  in.active.resize(rows.size() * d);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const auto code = encode(c, data.value(rows[r], c));
      if (code < 0)
        throw Error("darn: row " + std::to_string(rows[r] + 1) + " outside the encoder domain of column '" +
                    schema_[c].name + "'");
      in.active[r * d + c] = offsets_[c] + code;
    }
  return in;
}

nn::SparseInput DarnModel::encode_codes(std::span<const std::int32_t> codes) const {
  if (codes.size() != schema_.size()) throw Error("darn: one code per column required");
  nn::SparseInput in{1, width_, static_cast<int>(codes.size()), {}};
  for (std::size_t c = 0; c < codes.size(); ++c) {
    if (codes[c] < 0 || codes[c] >= sizes_[c]) throw Error("darn: out-of-domain code");
    in.active.push_back(offsets_[c] + codes[c]);
  }
  return in;
}

std::vector<Eigen::VectorXd> DarnModel::conditionals(std::span<const std::int32_t> codes) const {
  const nn::Mat out = net_.forward(params_, encode_codes(codes));
  std::vector<Eigen::VectorXd> p;
  for (std::size_t c = 0; c < schema_.size(); ++c)
    p.push_back(softmax(out.row(0).segment(offsets_[c], sizes_[c]).transpose()));
  return p;
}

double DarnModel::joint_logprob(std::span<const std::int32_t> codes) const {
  const nn::Mat out = net_.forward(params_, encode_codes(codes));
  double lp = 0.0;
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    const auto z = out.row(0).segment(offsets_[c], sizes_[c]);
    const double m = z.maxCoeff();
    lp += z[codes[c]] - m - std::log((z.array() - m).exp().sum());
  }
  return lp;
}

double DarnModel::loss(const Table& data, std::span<const std::size_t> rows, nn::Vec* grad, std::uint64_t) const {
  if (rows.empty()) throw Error("darn: empty batch");
  const auto in = encode_rows(data, rows);
  nn::Mlp::Cache cache;
  const nn::Mat out = net_.forward(params_, in, grad ? &cache : nullptr);
  const auto d = schema_.size();
  const auto n = static_cast<double>(rows.size());
  nn::Mat d_out;
  if (grad) d_out.resize(out.rows(), out.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const auto z = out.row(r).segment(offsets_[c], sizes_[c]);
      const double m = z.maxCoeff();
      const double lse = m + std::log((z.array() - m).exp().sum());
      const int target = in.active[r * d + c];
      total += lse - out(r, target);
      if (grad) {
        d_out.row(r).segment(offsets_[c], sizes_[c]) = ((z.array() - lse).exp() / n).matrix();
        d_out(r, target) -= 1.0 / n;
      }
    }
  if (grad) net_.backward(params_, cache, d_out, *grad);
  return total / n;
}

std::vector<double> DarnModel::per_example_loss(const Table& data) const {
  std::vector<double> out(data.row_count());
  constexpr std::size_t chunk = 4096;
  std::vector<std::size_t> rows;
  const auto d = schema_.size();
  for (std::size_t b = 0; b < data.row_count(); b += chunk) {
    const std::size_t e = std::min(data.row_count(), b + chunk);
    rows.resize(e - b);
    for (std::size_t r = b; r < e; ++r) rows[r - b] = r;
    const auto in = encode_rows(data, rows);
    const nn::Mat z = net_.forward(params_, in);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      double l = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const auto blk = z.row(static_cast<Eigen::Index>(r)).segment(offsets_[c], sizes_[c]);
        const double m = blk.maxCoeff();
        l += m + std::log((blk.array() - m).exp().sum()) - z(static_cast<Eigen::Index>(r), in.active[r * d + c]);
      }
      out[b + r] = l;
    }
  }
  return out;
}

double DarnModel::distill_loss(const LearnedModel& teacher, const Table& data, std::span<const std::size_t> rows,
                               nn::Vec* grad, std::uint64_t) const {
  const auto* t = dynamic_cast<const DarnModel*>(&teacher);
  if (!t) throw Error("darn distillation needs a darn teacher");
  if (!(t->schema_ == schema_) || t->values_ != values_ || t->cfg_.hidden != cfg_.hidden)
    throw Error("darn distillation: column order or encoder mismatch");
  if (rows.empty()) throw Error("darn: empty transfer batch");
  const auto in = encode_rows(data, rows);
  const nn::Mat zt = t->net_.forward(t->params_, in);
  nn::Mlp::Cache cache;
  const nn::Mat zs = net_.forward(params_, in, grad ? &cache : nullptr);
  const auto d = schema_.size();
  const double scale = 1.0 / (static_cast<double>(rows.size()) * static_cast<double>(d));
  nn::Mat d_out;
  if (grad) d_out = nn::Mat::Zero(zs.rows(), zs.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < zs.rows(); ++r)
    for (std::size_t c = 0; c < d; ++c) {
      if (sizes_[c] < 2) continue;  // a single-valued column carries no information
      const Eigen::VectorXd a = zt.row(r).segment(offsets_[c], sizes_[c]).transpose();
      const Eigen::VectorXd b = zs.row(r).segment(offsets_[c], sizes_[c]).transpose();
      if (grad) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(sizes_[c]);
        total += annealed_ce(a, b, cfg_.temperature, g);
        d_out.row(r).segment(offsets_[c], sizes_[c]) = g.transpose() * scale;
      } else {
        total += annealed_ce(a, b, cfg_.temperature);
      }
    }
  if (grad) net_.backward(params_, cache, d_out, *grad);
  return total * scale;
}

nlohmann::json DarnModel::to_json() const {
  return {{"schema", schema_.to_json()}, {"config", cfg_.to_json()}, {"values", values_},
          {"rows", rows_},               {"params", params_to_json(params_)}};
}

std::unique_ptr<DarnModel> DarnModel::from_json(const nlohmann::json& j) {
  std::unique_ptr<DarnModel> m(new DarnModel(Schema::from_json(j.at("schema")),
                                             j.at("values").get<std::vector<std::vector<double>>>(),
                                             DarnConfig::from_json(j.at("config"))));
  m->params_ = params_from_json(j.at("params"), static_cast<std::size_t>(m->params_.size()));
  m->rows_ = j.at("rows").get<double>();
  return m;
}

double joint_logprob(const DarnModel& model, const Table& data, std::size_t row) {
  std::vector<std::int32_t> codes(model.column_count());
  for (std::size_t c = 0; c < codes.size(); ++c) {
    codes[c] = model.encode(c, data.value(row, c));
    if (codes[c] < 0) throw Error("darn: value outside the encoder domain of '" + model.schema()[c].name + "'");
  }
  return model.joint_logprob(codes);
}

double ce_estimate(const DarnModel& model, const Query& query, int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw Error("ce_estimate: need at least one sample");
  query.validate(model.schema());
  const std::size_t d = model.column_count();

  // allowed codes per filtered column
  std::vector<std::vector<char>> allowed(d);
  int last = -1;
  for (const auto& f : query.filters) {
    auto& a = allowed[f.column];
    if (a.empty()) a.assign(static_cast<std::size_t>(model.domain_size(f.column)), 1);
    for (int k = 0; k < model.domain_size(f.column); ++k)
      if (!f.accepts(model.decode(f.column, k))) a[k] = 0;
    last = std::max(last, static_cast<int>(f.column));
  }
  if (last < 0) return model.row_count();
  for (const auto& a : allowed)
    if (!a.empty() && std::none_of(a.begin(), a.end(), [](char v) { return v != 0; })) return 0.0;

  const auto& layers = model.net().layers();
  const auto& theta = model.params();
  const int s = n_samples;
  const auto& l0 = layers.front();
  std::vector<Eigen::MatrixXd> ws;
  for (std::size_t li = 0; li < layers.size(); ++li) ws.push_back(model.net().weight(theta, li));
  const Eigen::MatrixXd& w0 = ws.front();
  Eigen::Map<const Eigen::RowVectorXd> b0(theta.data() + l0.b_offset, l0.out);
  nn::Mat first = b0.replicate(s, 1);
  std::vector<double> weight(static_cast<std::size_t>(s), 1.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  for (int c = 0; c <= last; ++c) {
    nn::Mat h = first;
    for (std::size_t li = 1; li < layers.size(); ++li) {
      h = h.cwiseMax(0.0);
      const auto& l = layers[li];
      const Eigen::MatrixXd& w = ws[li];
      Eigen::Map<const Eigen::RowVectorXd> b(theta.data() + l.b_offset, l.out);
      const bool out_layer = li + 1 == layers.size();
      const int lo = out_layer ? model.block_offset(c) : 0;
      const int n = out_layer ? model.domain_size(c) : l.out;
      nn::Mat next(s, n);
      next.noalias() = h * w.middleRows(lo, n).transpose();
      next.rowwise() += b.segment(lo, n);
      h = std::move(next);
    }
    if (layers.size() == 1) h = first.middleCols(model.block_offset(c), model.domain_size(c));
    const auto& a = allowed[static_cast<std::size_t>(c)];
    const int n = model.domain_size(c);
    Eigen::VectorXd p(n);
    for (int i = 0; i < s; ++i) {
      if (weight[i] == 0.0) continue;
      const auto z = h.row(i);
      const double m = z.maxCoeff();
      p = (z.array() - m).exp().transpose();
      if (!a.empty())
        for (int k = 0; k < n; ++k)
          if (!a[k]) p[k] = 0.0;
      const double total = p.sum();
      const double full = a.empty() ? total : (z.array() - m).exp().sum();
      if (!(total > 0.0)) {
        weight[i] = 0.0;
        continue;
      }
      weight[i] *= total / full;
      double u = unif(rng) * total;
      int k = 0;
      for (; k < n - 1; ++k) {
        u -= p[k];
        if (u <= 0.0) break;
      }
      if (p[k] == 0.0) {
        k = n - 1;
        while (p[k] == 0.0) --k;
      }
      first.row(i) += w0.col(model.block_offset(c) + k).transpose();
    }
  }
  double mean = 0.0;
  for (double w : weight) mean += w;
  return std::ceil(model.row_count() * mean / s);
}

}  // namespace ddup
