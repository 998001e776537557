// Mixture density network p(y | x) for one categorical x and one numeric y,
// plus the COUNT/SUM/AVG estimators built on it.

#pragma once

#include <random>
#include <string_view>

#include "ddup/model.hpp"
#include "ddup/query.hpp"

namespace ddup {

/// One-dimensional Gaussian mixture in raw y units.
struct GaussianMixture {
  std::vector<double> weight;
  std::vector<double> mean;
  std::vector<double> stddev;

  double pdf(double y) const;
  double cdf(double y) const;
  /// P(lb <= y <= ub).
  double mass(double lb, double ub) const;
  /// Integral of y * pdf(y) over [lb, ub] (closed form per component).
  double first_moment(double lb, double ub) const;
  std::vector<double> sample(std::size_t n, std::mt19937_64& rng) const;
};

struct MdnConfig {
  int components = 10;
  std::vector<int> hidden{64};
  double sigma_floor = 1e-3;  // in scaled y units
  double temperature = 2.0;   // softening of the weight logits when distilling
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static MdnConfig from_json(const nlohmann::json& j);
};

class FrequencyTable {
 public:
  FrequencyTable() = default;
  explicit FrequencyTable(std::size_t categories) : counts_(categories, 0) {}
  static FrequencyTable of(const Table& t, std::size_t column);

  void add(const Table& t, std::size_t column);
  std::int64_t count(std::int32_t code) const { return counts_.at(static_cast<std::size_t>(code)); }
  std::int64_t total() const { return total_; }
  const std::vector<std::int64_t>& counts() const { return counts_; }

  nlohmann::json to_json() const;
  static FrequencyTable from_json(const nlohmann::json& j);

 private:
  std::vector<std::int64_t> counts_;
  std::int64_t total_ = 0;
};

class MdnModel final : public LearnedModel {
 public:
  MdnModel(Schema schema, std::string_view x_column, std::string_view y_column, MdnConfig cfg = {});

  std::string arch() const override { return "mdn"; }
  TaskTag task() const override { return TaskTag::aqp; }
  const Schema& schema() const override { return schema_; }
  std::unique_ptr<LearnedModel> clone() const override { return std::make_unique<MdnModel>(*this); }

  double loss(const Table& data, std::span<const std::size_t> rows, nn::Vec* grad,
              std::uint64_t noise_seed) const override;
  std::vector<double> per_example_loss(const Table& data) const override;
  double distill_loss(const LearnedModel& teacher, const Table& data, std::span<const std::size_t> rows,
                      nn::Vec* grad, std::uint64_t noise_seed) const override;

  void absorb_metadata(const Table& inserted) override { freq_.add(inserted, x_); }
  void reset_metadata(const Table& full) override { freq_ = FrequencyTable::of(full, x_); }

  void set_distill_temperature(double t) override {
    if (!(t > 0.0)) throw Error("temperature must be positive");
    cfg_.temperature = t;
  }

  nlohmann::json to_json() const override;
  static std::unique_ptr<MdnModel> from_json(const nlohmann::json& j);

  const MdnConfig& config() const { return cfg_; }
  std::size_t x_column() const { return x_; }
  std::size_t y_column() const { return y_; }
  int categories() const { return static_cast<int>(schema_[x_].categories.size()); }
  const FrequencyTable& frequencies() const { return freq_; }
  const nn::Mlp& net() const { return net_; }

  /// Network outputs for category `x`: [weight logits | means | raw scales], scaled units.
  Eigen::VectorXd heads(std::int32_t x) const;
  /// The conditional density of y given x, in raw units.
  GaussianMixture conditional(std::int32_t x) const;

  double scale_y(double y) const { return (y - y_mid_) / y_half_; }
  double unscale_y(double s) const { return s * y_half_ + y_mid_; }

 private:
  struct Heads {
    nn::Mat logits, mu, sigma, raw;  // rows x m each
  };
  Heads split(const nn::Mat& out) const;
  nn::SparseInput encode(const Table& data, std::span<const std::size_t> rows) const;

  Schema schema_;
  std::size_t x_ = 0;
  std::size_t y_ = 0;
  MdnConfig cfg_;
  nn::Mlp net_;
  double y_mid_ = 0.0;
  double y_half_ = 1.0;
  FrequencyTable freq_;
};

/// Density of y given category label `x`, raw units. Throws on an unknown category.
double mdn_pdf(const MdnModel& model, std::string_view x, double y);

/// ft[x_eq] * P(lb <= y <= ub | x_eq). Unknown categories give 0 and a warning on stderr.
double aqp_count(const MdnModel& model, const FrequencyTable& ft, std::string_view x_eq, double lb, double ub);
double aqp_sum(const MdnModel& model, const FrequencyTable& ft, std::string_view x_eq, double lb, double ub);
/// SUM / COUNT; throws when the COUNT estimate is (nearly) zero.
double aqp_avg(const MdnModel& model, const FrequencyTable& ft, std::string_view x_eq, double lb, double ub);

/// Answers a query of the form x = c AND lb <= y <= ub (either bound optional)
/// with the model's own frequency table.
double aqp_estimate(const MdnModel& model, const Query& query);

}  // namespace ddup
