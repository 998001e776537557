#include "ddup/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ddup {

class ForestBuilder {
 public:
  ForestBuilder(RandomForest& f, const Table& train, const ForestConfig& cfg) : f_(f), cfg_(cfg) {
    const auto nf = f_.features_.size();
    x_.resize(nf);
    for (std::size_t j = 0; j < nf; ++j) {
      x_[j].resize(train.row_count());
      for (std::size_t r = 0; r < train.row_count(); ++r)
        x_[j][r] = f_.bin_of(j, train.value(r, f_.features_[j]));
    }
    y_.assign(train.codes(f_.target_).begin(), train.codes(f_.target_).end());
    mtry_ = cfg_.features_per_split > 0 ? cfg_.features_per_split
                                         : std::max(1, static_cast<int>(std::lround(std::sqrt(double(nf)))));
    mtry_ = std::min<int>(mtry_, static_cast<int>(nf));
  }

  RandomForest::Tree grow(std::mt19937_64& rng) {
    RandomForest::Tree tree;
    std::vector<std::size_t> idx(y_.size());
    std::uniform_int_distribution<std::size_t> pick(0, y_.size() - 1);
    for (auto& i : idx) i = pick(rng);
    build(tree, idx, 0, rng);
    return tree;
  }

 private:
  int build(RandomForest::Tree& tree, std::vector<std::size_t>& idx, int depth, std::mt19937_64& rng) {
    const int k = f_.classes_;
    std::vector<double> counts(k, 0.0);
    for (auto i : idx) counts[y_[i]] += 1.0;
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const auto n = static_cast<double>(idx.size());
    const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }) <= 1;
    auto make_leaf = [&] {
      auto& node = tree.nodes[id];
      node.proba.resize(k);
      for (int c = 0; c < k; ++c) node.proba[c] = counts[c] / n;
      return id;
    };
    if (pure || depth >= cfg_.max_depth || idx.size() < 2u * cfg_.min_leaf) return make_leaf();

    std::vector<int> feats(f_.features_.size());
    std::iota(feats.begin(), feats.end(), 0);
    for (int i = 0; i < mtry_; ++i) {
      std::uniform_int_distribution<int> u(i, static_cast<int>(feats.size()) - 1);
      std::swap(feats[i], feats[u(rng)]);
    }

    double best = n * (1.0 - sq_sum(counts, n)) - 1e-12;
    int best_f = -1;
    std::vector<char> best_left;
    for (int fi = 0; fi < mtry_; ++fi) {
      const int j = feats[fi];
      const int nb = f_.bins_[j];
      std::vector<double> hist(static_cast<std::size_t>(nb) * k, 0.0);
      std::vector<double> tot(nb, 0.0);
      for (auto i : idx) {
        hist[static_cast<std::size_t>(x_[j][i]) * k + y_[i]] += 1.0;
        tot[x_[j][i]] += 1.0;
      }
      std::vector<int> order(nb);
      std::iota(order.begin(), order.end(), 0);
      if (f_.categorical_[j])
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
          const double pa = tot[a] > 0 ? hist[a * k] / tot[a] : 2.0;
          const double pb = tot[b] > 0 ? hist[b * k] / tot[b] : 2.0;
          return pa < pb;
        });
      std::vector<double> left(k, 0.0);
      double nl = 0.0;
      for (int p = 0; p + 1 < nb; ++p) {
        const int b = order[p];
        if (tot[b] == 0.0) continue;
        for (int c = 0; c < k; ++c) left[c] += hist[static_cast<std::size_t>(b) * k + c];
        nl += tot[b];
        const double nr = n - nl;
        if (nl < cfg_.min_leaf || nr < cfg_.min_leaf) continue;
        std::vector<double> right(k);
        for (int c = 0; c < k; ++c) right[c] = counts[c] - left[c];
        const double imp = nl * (1.0 - sq_sum(left, nl)) + nr * (1.0 - sq_sum(right, nr));
        if (imp < best) {
          best = imp;
          best_f = j;
          best_left.assign(nb, 0);
          for (int q = 0; q <= p; ++q) best_left[order[q]] = 1;
        }
      }
    }
    if (best_f < 0) return make_leaf();

    std::vector<std::size_t> li, ri;
    for (auto i : idx) (best_left[x_[best_f][i]] ? li : ri).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    tree.nodes[id].feature = best_f;
    tree.nodes[id].goes_left = std::move(best_left);
    const int l = build(tree, li, depth + 1, rng);
    const int r = build(tree, ri, depth + 1, rng);
    tree.nodes[id].left = l;
    tree.nodes[id].right = r;
    return id;
  }

  static double sq_sum(const std::vector<double>& c, double n) {
    double s = 0.0;
    for (double v : c) s += (v / n) * (v / n);
    return s;
  }

  RandomForest& f_;
  const ForestConfig& cfg_;
  std::vector<std::vector<int>> x_;
  std::vector<int> y_;
  int mtry_ = 1;
};

RandomForest RandomForest::fit(const Table& train, std::size_t target, const ForestConfig& cfg) {
  if (train.empty()) throw Error("forest: empty training table");
  if (target >= train.column_count() || !train.schema()[target].is_categorical())
    throw Error("forest: target must be a categorical column");
  if (cfg.trees < 1 || cfg.max_depth < 1 || cfg.min_leaf < 1 || cfg.max_bins < 2)
    throw Error("forest: invalid configuration");
  RandomForest f;
  f.target_ = target;
  f.classes_ = static_cast<int>(train.schema()[target].categories.size());
  for (std::size_t c = 0; c < train.column_count(); ++c) {
    if (c == target) continue;
    f.features_.push_back(c);
    const bool cat = train.schema()[c].is_categorical();
    f.categorical_.push_back(cat);
    std::vector<double> edges;
    if (cat) {
      f.bins_.push_back(static_cast<int>(train.schema()[c].categories.size()));
    } else {
      std::vector<double> v(train.reals(c).begin(), train.reals(c).end());
      std::sort(v.begin(), v.end());
      std::vector<double> uniq = v;
      uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
      if (static_cast<int>(uniq.size()) <= cfg.max_bins) {
        edges = uniq;
      } else {
        for (int b = 1; b <= cfg.max_bins; ++b)
          edges.push_back(v[std::min(v.size() - 1, v.size() * b / cfg.max_bins)]);
        edges.back() = v.back();
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
      }
      f.bins_.push_back(static_cast<int>(edges.size()));
    }
    f.edges_.push_back(std::move(edges));
  }
  if (f.features_.empty()) throw Error("forest: no feature columns");
  ForestBuilder builder(f, train, cfg);
  std::mt19937_64 rng(cfg.seed);
  for (int t = 0; t < cfg.trees; ++t) f.trees_.push_back(builder.grow(rng));
  return f;
}

int RandomForest::bin_of(std::size_t feature, double value) const {
  if (categorical_[feature]) return std::clamp(static_cast<int>(value), 0, bins_[feature] - 1);
  const auto& e = edges_[feature];
  const auto it = std::lower_bound(e.begin(), e.end(), value);
  return std::min(static_cast<int>(it - e.begin()), bins_[feature] - 1);
}

std::int32_t RandomForest::predict(const Table& t, std::size_t row) const {
  std::vector<double> p(classes_, 0.0);
  std::vector<int> bins(features_.size());
  for (std::size_t j = 0; j < features_.size(); ++j) bins[j] = bin_of(j, t.value(row, features_[j]));
  for (const auto& tree : trees_) {
    int id = 0;
    while (tree.nodes[id].feature >= 0) {
      const auto& n = tree.nodes[id];
      id = n.goes_left[bins[n.feature]] ? n.left : n.right;
    }
    for (int c = 0; c < classes_; ++c) p[c] += tree.nodes[id].proba[c];
  }
  return static_cast<std::int32_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::vector<std::int32_t> RandomForest::predict(const Table& t) const {
  std::vector<std::int32_t> out(t.row_count());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = predict(t, r);
  return out;
}

double micro_f1(std::span<const std::int32_t> truth, std::span<const std::int32_t> predicted) {
  if (truth.size() != predicted.size()) throw Error("micro_f1: length mismatch");
  if (truth.empty()) throw Error("micro_f1: no predictions");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == predicted[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

FidelityResult fidelity_eval(const Table& real_train, const Table& synth_train, const Table& holdout,
                             std::string_view target_column, const ForestConfig& cfg) {
  if (!(real_train.schema() == holdout.schema()) || !(synth_train.schema() == holdout.schema()))
    throw Error("fidelity: schema mismatch");
  const auto target = holdout.schema().index_of(target_column);
  const auto truth = holdout.codes(target);
  FidelityResult r;
  r.f1_real = micro_f1(truth, RandomForest::fit(real_train, target, cfg).predict(holdout));
  r.f1_synth = micro_f1(truth, RandomForest::fit(synth_train, target, cfg).predict(holdout));
  return r;
}

}  // namespace ddup
