// Masked autoregressive network over all columns of a table (schema order),
// and the progressive-sampling cardinality estimator built on it.

#pragma once

#include "ddup/model.hpp"
#include "ddup/query.hpp"

namespace ddup {

struct DarnConfig {
  std::vector<int> hidden{128, 128};
  double temperature = 2.0;  // softening of the conditionals when distilling
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static DarnConfig from_json(const nlohmann::json& j);
};

class DarnModel final : public LearnedModel {
 public:
  /// Numeric columns are dictionary encoded over the distinct values present
  /// in `fit_data`; categorical columns use their schema domain.
  explicit DarnModel(const Table& fit_data, DarnConfig cfg = {});

  std::string arch() const override { return "darn"; }
  TaskTag task() const override { return TaskTag::ce; }
  const Schema& schema() const override { return schema_; }
  std::unique_ptr<LearnedModel> clone() const override { return std::make_unique<DarnModel>(*this); }

  double loss(const Table& data, std::span<const std::size_t> rows, nn::Vec* grad,
              std::uint64_t noise_seed) const override;
  std::vector<double> per_example_loss(const Table& data) const override;
  double distill_loss(const LearnedModel& teacher, const Table& data, std::span<const std::size_t> rows,
                      nn::Vec* grad, std::uint64_t noise_seed) const override;

  void absorb_metadata(const Table& inserted) override { rows_ += static_cast<double>(inserted.row_count()); }
  void reset_metadata(const Table& full) override { rows_ = static_cast<double>(full.row_count()); }

  void set_distill_temperature(double t) override {
    if (!(t > 0.0)) throw Error("temperature must be positive");
    cfg_.temperature = t;
  }

  nlohmann::json to_json() const override;
  static std::unique_ptr<DarnModel> from_json(const nlohmann::json& j);

  const DarnConfig& config() const { return cfg_; }
  const nn::Mlp& net() const { return net_; }
  std::size_t column_count() const { return schema_.size(); }
  int domain_size(std::size_t col) const { return sizes_[col]; }
  int block_offset(std::size_t col) const { return offsets_[col]; }
  /// Code of `value` in column `col`, or -1 outside the encoder domain.
  std::int32_t encode(std::size_t col, double value) const;
  /// Inverse of encode: category code or the numeric value.
  double decode(std::size_t col, std::int32_t code) const;
  /// Current cardinality of the modelled table.
  double row_count() const { return rows_; }

  /// Throws when a row falls outside the encoder domains.
  nn::SparseInput encode_rows(const Table& data, std::span<const std::size_t> rows) const;
  nn::SparseInput encode_codes(std::span<const std::int32_t> codes) const;
  /// Every column's conditional distribution for one encoded row.
  std::vector<Eigen::VectorXd> conditionals(std::span<const std::int32_t> codes) const;
  double joint_logprob(std::span<const std::int32_t> codes) const;

 private:
  DarnModel(Schema schema, std::vector<std::vector<double>> values, DarnConfig cfg);

  Schema schema_;
  DarnConfig cfg_;
  std::vector<std::vector<double>> values_;  // sorted distinct values per numeric column
  std::vector<int> sizes_;
  std::vector<int> offsets_;
  int width_ = 0;
  nn::Mlp net_;
  double rows_ = 0.0;

  void build_network();
};

double joint_logprob(const DarnModel& model, const Table& data, std::size_t row);

/// Estimated COUNT(*) of the query by progressive sampling with `n_samples`
/// paths, scaled by the model's row count and rounded up to whole rows (0 only
/// when no path has support). Deterministic given `seed`.
double ce_estimate(const DarnModel& model, const Query& query, int n_samples, std::uint64_t seed);

}  // namespace ddup
