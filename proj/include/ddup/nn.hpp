// Minimal dense-network toolkit with hand-written backpropagation.
//
// All parameters of a model live in one flat Eigen vector; layers only hold
// offsets into it, so cloning a model is a vector copy and the optimizer can
// treat every model family the same way.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace ddup::nn {

using Vec = Eigen::VectorXd;
/// Activations: one row per example.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { identity, relu, tanh };

/// Rows of one-hot blocks given as active input indices, `per_row` per row.
struct SparseInput {
  int rows = 0;
  int width = 0;
  int per_row = 0;
  std::vector<std::int32_t> active;  // rows * per_row entries
};

struct DenseLayer {
  int in = 0;
  int out = 0;
  std::size_t w_offset = 0;  // out x in, column major
  std::size_t b_offset = 0;
};

class Mlp {
 public:
  struct Cache {
    const SparseInput* sparse = nullptr;
    Mat input;                 // dense input (empty when sparse)
    std::vector<Mat> pre;      // pre-activation per layer
    std::vector<Mat> post;     // post-activation per layer (last == output)
  };

  Mlp() = default;
  /// sizes = {input, hidden..., output}; parameters start at `offset`.
  Mlp(std::vector<int> sizes, Activation hidden, std::size_t offset);

  std::size_t offset() const { return offset_; }
  std::size_t end() const { return end_; }
  std::size_t param_count() const { return end_ - offset_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  int input_size() const { return layers_.front().in; }
  int output_size() const { return layers_.back().out; }

  /// 0/1 connectivity per layer (out x in). Empty vector = fully connected.
  void set_masks(std::vector<Eigen::MatrixXd> masks);
  const std::vector<Eigen::MatrixXd>& masks() const { return masks_; }
  /// Weights of layer i (out x in) with its mask applied.
  Eigen::MatrixXd weight(const Vec& params, std::size_t i) const;

  /// Glorot-uniform weights (masked), zero biases.
  void init(Vec& params, std::mt19937_64& rng) const;

  Mat forward(const Vec& params, const Mat& x, Cache* cache = nullptr) const;
  Mat forward(const Vec& params, const SparseInput& x, Cache* cache = nullptr) const;

  /// Accumulates parameter gradients into `grad`; optionally returns d(loss)/d(input).
  void backward(const Vec& params, const Cache& cache, const Mat& d_out, Vec& grad,
                Mat* d_input = nullptr) const;

  /// Pre-activation of the first layer for a sparse input (used by incremental samplers).
  Mat first_layer(const Vec& params, const SparseInput& x) const;
  /// Runs layers 1.. on a first-layer pre-activation.
  Mat forward_from_first(const Vec& params, const Mat& first_pre) const;

 private:
  Mat run_rest(const Vec& params, Mat h, Cache* cache) const;
  Mat activate(const Mat& pre) const;

  std::vector<DenseLayer> layers_;
  std::vector<Eigen::MatrixXd> masks_;
  Activation hidden_ = Activation::relu;
  std::size_t offset_ = 0;
  std::size_t end_ = 0;
};

/// Row-wise log-softmax over a column block [begin, begin + width).
void log_softmax_block(const Mat& logits, int begin, int width, Mat& out);

/// Momentum-free adaptive step size (RMSProp).
class RmsProp {
 public:
  RmsProp(std::size_t size, double lr, double decay = 0.9, double eps = 1e-8);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  void step(Vec& params, const Vec& grad);

 private:
  Vec mean_sq_;
  double lr_;
  double decay_;
  double eps_;
};

}  // namespace ddup::nn
