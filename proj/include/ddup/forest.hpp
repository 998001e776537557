// Random-forest classifier over table columns, used to score synthetic data.

#pragma once

#include "ddup/table.hpp"

namespace ddup {

struct ForestConfig {
  int trees = 30;
  int max_depth = 12;
  int min_leaf = 5;
  int max_bins = 32;
  int features_per_split = 0;  // 0 = round(sqrt(feature count))
  std::uint64_t seed = 11;
};

class RandomForest {
 public:
  /// Every column except `target` is a feature; `target` must be categorical.
  static RandomForest fit(const Table& train, std::size_t target, const ForestConfig& cfg = {});

  std::int32_t predict(const Table& t, std::size_t row) const;
  std::vector<std::int32_t> predict(const Table& t) const;

 private:
  struct Node {
    int feature = -1;              // -1 for leaves
    std::vector<char> goes_left;   // per bin
    int left = -1, right = -1;
    std::vector<double> proba;     // leaves only
  };
  struct Tree {
    std::vector<Node> nodes;
  };

  int bin_of(std::size_t feature, double value) const;

  std::size_t target_ = 0;
  int classes_ = 0;
  std::vector<std::size_t> features_;        // table column per feature
  std::vector<bool> categorical_;
  std::vector<std::vector<double>> edges_;   // numeric upper bin edges
  std::vector<int> bins_;
  std::vector<Tree> trees_;

  friend class ForestBuilder;
};

/// Micro-averaged F1 of single-label predictions (equals accuracy).
double micro_f1(std::span<const std::int32_t> truth, std::span<const std::int32_t> predicted);

struct FidelityResult {
  double f1_real = 0.0;
  double f1_synth = 0.0;
};

/// Fits one forest on real and one on synthetic rows and scores both on the holdout.
FidelityResult fidelity_eval(const Table& real_train, const Table& synth_train, const Table& holdout,
                             std::string_view target_column, const ForestConfig& cfg = {});

}  // namespace ddup
