#include "ddup/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ddup::nn {

Mlp::Mlp(std::vector<int> sizes, Activation hidden, std::size_t offset)
    : hidden_(hidden), offset_(offset), end_(offset) {
  if (sizes.size() < 2) throw std::invalid_argument("mlp needs at least input and output sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    DenseLayer l;
    l.in = sizes[i];
    l.out = sizes[i + 1];
    l.w_offset = end_;
    end_ += static_cast<std::size_t>(l.in) * l.out;
    l.b_offset = end_;
    end_ += l.out;
    layers_.push_back(l);
  }
}

void Mlp::set_masks(std::vector<Eigen::MatrixXd> masks) {
  if (!masks.empty() && masks.size() != layers_.size())
    throw std::invalid_argument("mlp: one mask per layer required");
  for (std::size_t i = 0; i < masks.size(); ++i)
    if (masks[i].rows() != layers_[i].out || masks[i].cols() != layers_[i].in)
      throw std::invalid_argument("mlp: mask shape mismatch");
  masks_ = std::move(masks);
}

void Mlp::init(Vec& params, std::mt19937_64& rng) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const double bound = std::sqrt(6.0 / (l.in + l.out));
    std::uniform_real_distribution<double> u(-bound, bound);
    Eigen::Map<Eigen::MatrixXd> w(params.data() + l.w_offset, l.out, l.in);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = u(rng);
    if (!masks_.empty()) w = w.cwiseProduct(masks_[i]);
    params.segment(l.b_offset, l.out).setZero();
  }
}

Eigen::MatrixXd Mlp::weight(const Vec& params, std::size_t i) const {
  const auto& l = layers_[i];
  Eigen::Map<const Eigen::MatrixXd> w(params.data() + l.w_offset, l.out, l.in);
  if (masks_.empty()) return w;
  return w.cwiseProduct(masks_[i]);
}

Mat Mlp::activate(const Mat& pre) const {
  switch (hidden_) {
    case Activation::relu: return pre.cwiseMax(0.0);
    case Activation::tanh: return pre.array().tanh().matrix();
    case Activation::identity: break;
  }
  return pre;
}

Mat Mlp::first_layer(const Vec& params, const SparseInput& x) const {
  const auto& l = layers_.front();
  if (x.width != l.in) throw std::invalid_argument("mlp: sparse input width mismatch");
  const Eigen::MatrixXd w = weight(params, 0);
  Eigen::Map<const Eigen::RowVectorXd> b(params.data() + l.b_offset, l.out);
  Mat h(x.rows, l.out);
  for (int r = 0; r < x.rows; ++r) {
    h.row(r) = b;
    for (int k = 0; k < x.per_row; ++k) {
      const auto j = x.active[static_cast<std::size_t>(r) * x.per_row + k];
      if (j >= 0) h.row(r) += w.col(j).transpose();
    }
  }
  return h;
}

Mat Mlp::run_rest(const Vec& params, Mat h, Cache* cache) const {
  // h is the pre-activation of layer 0
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (i > 0) {
      const auto& l = layers_[i];
      const Eigen::MatrixXd w = weight(params, i);
      Eigen::Map<const Eigen::RowVectorXd> b(params.data() + l.b_offset, l.out);
      Mat pre(h.rows(), l.out);
      pre.noalias() = h * w.transpose();
      pre.rowwise() += b;
      h = std::move(pre);
    }
    const bool last = i + 1 == layers_.size();
    if (cache) cache->pre.push_back(h);
    if (!last) h = activate(h);
    if (cache) cache->post.push_back(h);
  }
  return h;
}

Mat Mlp::forward_from_first(const Vec& params, const Mat& first_pre) const {
  return run_rest(params, first_pre, nullptr);
}

Mat Mlp::forward(const Vec& params, const Mat& x, Cache* cache) const {
  const auto& l = layers_.front();
  if (x.cols() != l.in) throw std::invalid_argument("mlp: input width mismatch");
  const Eigen::MatrixXd w = weight(params, 0);
  Eigen::Map<const Eigen::RowVectorXd> b(params.data() + l.b_offset, l.out);
  Mat pre(x.rows(), l.out);
  pre.noalias() = x * w.transpose();
  pre.rowwise() += b;
  if (cache) {
    cache->sparse = nullptr;
    cache->input = x;
    cache->pre.clear();
    cache->post.clear();
  }
  return run_rest(params, std::move(pre), cache);
}

Mat Mlp::forward(const Vec& params, const SparseInput& x, Cache* cache) const {
  if (cache) {
    cache->sparse = &x;
    cache->input.resize(0, 0);
    cache->pre.clear();
    cache->post.clear();
  }
  return run_rest(params, first_layer(params, x), cache);
}

void Mlp::backward(const Vec& params, const Cache& cache, const Mat& d_out, Vec& grad, Mat* d_input) const {
  Mat d = d_out;  // gradient w.r.t. the current layer's output (post-activation)
  for (std::size_t ii = layers_.size(); ii-- > 0;) {
    const auto& l = layers_[ii];
    const bool last = ii + 1 == layers_.size();
    if (!last) {
      switch (hidden_) {
        case Activation::relu:
          d = d.cwiseProduct((cache.pre[ii].array() > 0.0).cast<double>().matrix());
          break;
        case Activation::tanh:
          d = d.cwiseProduct((1.0 - cache.post[ii].array().square()).matrix());
          break;
        case Activation::identity: break;
      }
    }
    Eigen::Map<Eigen::MatrixXd> dw(grad.data() + l.w_offset, l.out, l.in);
    grad.segment(l.b_offset, l.out) += d.colwise().sum().transpose();

    if (ii == 0 && cache.sparse) {
      const auto& x = *cache.sparse;
      if (masks_.empty()) {
        for (int r = 0; r < x.rows; ++r)
          for (int k = 0; k < x.per_row; ++k) {
            const auto j = x.active[static_cast<std::size_t>(r) * x.per_row + k];
            if (j >= 0) dw.col(j) += d.row(r).transpose();
          }
      } else {
        for (int r = 0; r < x.rows; ++r)
          for (int k = 0; k < x.per_row; ++k) {
            const auto j = x.active[static_cast<std::size_t>(r) * x.per_row + k];
            if (j >= 0) dw.col(j) += d.row(r).transpose().cwiseProduct(masks_[0].col(j));
          }
      }
      if (d_input) throw std::invalid_argument("mlp: no input gradient for sparse inputs");
      return;
    }

    const Mat& below = ii == 0 ? cache.input : cache.post[ii - 1];
    if (masks_.empty()) {
      dw.noalias() += d.transpose() * below;
    } else {
      Eigen::MatrixXd g = d.transpose() * below;
      dw += g.cwiseProduct(masks_[ii]);
    }
    if (ii > 0 || d_input) {
      Mat next(d.rows(), l.in);
      next.noalias() = d * weight(params, ii);
      if (ii == 0) {
        *d_input = std::move(next);
        return;
      }
      d = std::move(next);
    }
  }
}

void log_softmax_block(const Mat& logits, int begin, int width, Mat& out) {
  out.resize(logits.rows(), width);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto z = logits.row(r).segment(begin, width);
    const double m = z.maxCoeff();
    const double lse = m + std::log((z.array() - m).exp().sum());
    out.row(r) = z.array() - lse;
  }
}

RmsProp::RmsProp(std::size_t size, double lr, double decay, double eps)
    : mean_sq_(Vec::Zero(static_cast<Eigen::Index>(size))), lr_(lr), decay_(decay), eps_(eps) {}

void RmsProp::step(Vec& params, const Vec& grad) {
  mean_sq_ = decay_ * mean_sq_ + (1.0 - decay_) * grad.cwiseAbs2();
  params.array() -= lr_ * grad.array() / (mean_sq_.array().sqrt() + eps_);
}

}  // namespace ddup::nn
