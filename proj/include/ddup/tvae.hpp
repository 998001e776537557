// Tabular variational autoencoder: ELBO training, shared-noise distillation
// and decoder sampling.

#pragma once

#include "ddup/model.hpp"

namespace ddup {

struct TvaeConfig {
  int latent = 16;
  std::vector<int> hidden{128};
  double sigma_floor = 0.01;     // numeric output scale floor (scaled units)
  bool distill_encoder = false;  // route distillation gradients into the encoder too
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static TvaeConfig from_json(const nlohmann::json& j);
};

/// Per-column encoding: one-hot categoricals, min-max scaled numerics.
struct ColumnTransform {
  bool categorical = false;
  int in_offset = 0, in_width = 0;    // encoder input block
  int out_offset = 0, out_width = 0;  // decoder output block (logits, or mean and raw scale)
  double lo = 0.0, hi = 0.0;          // numeric range seen at fit time
  std::vector<char> support;          // categories seen at fit time

  double scale(double v) const { return hi > lo ? 2.0 * (v - lo) / (hi - lo) - 1.0 : 0.0; }
  double unscale(double s) const { return hi > lo ? lo + (s + 1.0) * 0.5 * (hi - lo) : lo; }
};

/// Mean over rows of 0.5 * (||e_t - e_s||^2 + ||d_t - d_s||^2).
double shared_noise_mse(const nn::Mat& enc_teacher, const nn::Mat& enc_student, const nn::Mat& dec_teacher,
                        const nn::Mat& dec_student);

/// KL(N(mu, exp(log_sigma)^2) || N(0, 1)) summed over dimensions.
double gaussian_kl(const Eigen::Ref<const Eigen::VectorXd>& mu, const Eigen::Ref<const Eigen::VectorXd>& log_sigma);

class TvaeModel final : public LearnedModel {
 public:
  explicit TvaeModel(const Table& fit_data, TvaeConfig cfg = {});

  std::string arch() const override { return "tvae"; }
  TaskTag task() const override { return TaskTag::dg; }
  const Schema& schema() const override { return schema_; }
  std::unique_ptr<LearnedModel> clone() const override { return std::make_unique<TvaeModel>(*this); }

  /// Mean negative ELBO; each row's latent noise is seeded from its content and `noise_seed`.
  double loss(const Table& data, std::span<const std::size_t> rows, nn::Vec* grad,
              std::uint64_t noise_seed) const override;
  std::vector<double> per_example_loss(const Table& data) const override;
  double distill_loss(const LearnedModel& teacher, const Table& data, std::span<const std::size_t> rows,
                      nn::Vec* grad, std::uint64_t noise_seed) const override;
  void restrict_update_gradient(nn::Vec& grad) const override;

  nlohmann::json to_json() const override;
  static std::unique_ptr<TvaeModel> from_json(const nlohmann::json& j);

  const TvaeConfig& config() const { return cfg_; }
  const std::vector<ColumnTransform>& transforms() const { return cols_; }
  const nn::Mlp& encoder() const { return enc_; }
  const nn::Mlp& decoder() const { return dec_; }

  nn::Mat encode_input(const Table& data, std::span<const std::size_t> rows) const;
  /// Standard-normal draws, one row per table row, seeded by row content.
  nn::Mat row_noise(const Table& data, std::span<const std::size_t> rows, std::uint64_t salt) const;
  nn::Mat encode(const nn::Mat& x) const { return enc_.forward(params_, x); }
  nn::Mat decode(const nn::Mat& z) const { return dec_.forward(params_, z); }

  Table sample(std::size_t n, std::uint64_t seed) const;

 private:
  TvaeModel(Schema schema, std::vector<ColumnTransform> cols, TvaeConfig cfg);
  void build_networks();

  Schema schema_;
  TvaeConfig cfg_;
  std::vector<ColumnTransform> cols_;
  int in_width_ = 0;
  int out_width_ = 0;
  nn::Mlp enc_;
  nn::Mlp dec_;
};

/// n synthetic rows from the decoder with z ~ N(0, I).
Table sample_rows(const TvaeModel& model, std::size_t n, std::uint64_t seed);

}  // namespace ddup
