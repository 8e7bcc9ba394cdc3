#pragma once

// Stacked GRU with parallel softmax heads on the final hidden state.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "skybeam/nn/core.hpp"

namespace skybeam::nn {

struct GruShape {
  int input = 2;
  int hidden = 128;
  int layers = 2;
  int heads = 3;     // one classifier per future step
  int classes = 32;

  bool operator==(const GruShape&) const = default;
};

template <typename S>
struct GruStepCache {
  Mat<S> x, h_prev, z, r, h_tilde;
};

/// One GRU time step for a batch (columns). wx: 3H x in, wh: 3H x H, b: 3H, gate order [z; r; h].
template <typename S>
Mat<S> gru_step(const Eigen::Ref<const Mat<S>>& wx, const Eigen::Ref<const Mat<S>>& wh,
                const Eigen::Ref<const Mat<S>>& b, const Mat<S>& h, const Mat<S>& x, GruStepCache<S>* cache = nullptr) {
  const Eigen::Index H = wh.cols();
  if (wx.rows() != 3 * H || wh.rows() != 3 * H || b.rows() != 3 * H || b.cols() != 1)
    throw InvalidInput("gru_step: gate parameter shapes are inconsistent");
  if (x.rows() != wx.cols()) throw InvalidInput("gru_step: input width mismatch");
  if (h.rows() != H || h.cols() != x.cols()) throw InvalidInput("gru_step: hidden state shape mismatch");

  Mat<S> ax = wx * x;
  ax.colwise() += b.col(0);
  const Mat<S> azr = ax.topRows(2 * H) + wh.topRows(2 * H) * h;
  const Mat<S> z = (S(1) / (S(1) + (-azr.topRows(H).array()).exp())).matrix();
  const Mat<S> r = (S(1) / (S(1) + (-azr.bottomRows(H).array()).exp())).matrix();
  const Mat<S> rh = r.cwiseProduct(h);
  const Mat<S> h_tilde = (ax.bottomRows(H) + wh.bottomRows(H) * rh).array().tanh().matrix();
  Mat<S> out = h + z.cwiseProduct(h_tilde - h);
  if (cache) *cache = {x, h, z, r, h_tilde};
  return out;
}

template <typename S>
class GruNet {
 public:
  struct Cache {
    std::vector<std::vector<GruStepCache<S>>> steps;  // [layer][t]
    std::vector<std::vector<Mat<S>>> masks;           // dropout masks on each layer's output, [layer][t]
    Mat<S> final_hidden;                              // top layer, last step, before dropout
    Mat<S> head_mask;
    Mat<S> head_input;
  };

  GruNet() = default;

  GruNet(GruShape shape, double dropout, std::uint64_t seed) : shape_(shape), dropout_(dropout) {
    if (shape.input < 1 || shape.hidden < 1 || shape.layers < 1 || shape.heads < 1 || shape.classes < 1)
      throw InvalidInput("GruNet: dimensions must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidInput("GruNet: dropout must be in [0, 1)");
    const int H = shape.hidden;
    for (int l = 0; l < shape.layers; ++l) {
      const std::string p = "gru" + std::to_string(l);
      wx_.push_back(layout_.add(p + ".weight_x", 3 * H, l == 0 ? shape.input : H));
      wh_.push_back(layout_.add(p + ".weight_h", 3 * H, H));
      b_.push_back(layout_.add(p + ".bias", 3 * H, 1));
    }
    head_w_ = layout_.add("heads.weight", shape.heads * shape.classes, H);
    head_b_ = layout_.add("heads.bias", shape.heads * shape.classes, 1);
    params_ = Vec<S>::Zero(layout_.size());

    std::mt19937_64 rng(seed);
    for (int l = 0; l < shape.layers; ++l) {
      init_fan_in<S>(view(params_, layout_[wx_[l]]), H, rng);
      init_fan_in<S>(view(params_, layout_[wh_[l]]), H, rng);
      init_fan_in<S>(view(params_, layout_[b_[l]]), H, rng);
    }
    init_normal<S>(view(params_, layout_[head_w_]), 0.01, rng);
  }

  const GruShape& shape() const { return shape_; }
  double dropout() const { return dropout_; }
  const ParamLayout& layout() const { return layout_; }
  Vec<S>& params() { return params_; }
  const Vec<S>& params() const { return params_; }

  /// inputs[t] is (input x batch). Returns logits (heads*classes x batch); head h occupies rows
  /// [h*classes, (h+1)*classes). Dropout is applied only when `rng` is given.
  template <typename Rng = std::mt19937_64>
  Mat<S> forward(const std::vector<Mat<S>>& inputs, Cache* cache = nullptr, Rng* rng = nullptr) const {
    if (inputs.empty()) throw InvalidInput("GruNet: empty input sequence");
    const Eigen::Index B = inputs.front().cols();
    const int H = shape_.hidden;
    const std::size_t T = inputs.size();
    for (const auto& x : inputs)
      if (x.rows() != shape_.input || x.cols() != B) throw InvalidInput("GruNet: input shape mismatch");
    const bool drop = rng != nullptr && dropout_ > 0.0;
    if (cache) {
      cache->steps.assign(shape_.layers, std::vector<GruStepCache<S>>(T));
      cache->masks.assign(shape_.layers, {});
    }

    std::vector<Mat<S>> seq = inputs;
    Mat<S> h;
    for (int l = 0; l < shape_.layers; ++l) {
      h = Mat<S>::Zero(H, B);
      const auto wx = view(params_, layout_[wx_[l]]);
      const auto wh = view(params_, layout_[wh_[l]]);
      const auto b = view(params_, layout_[b_[l]]);
      const bool between = drop && l + 1 < shape_.layers;
      for (std::size_t t = 0; t < T; ++t) {
        h = gru_step<S>(wx, wh, b, h, seq[t], cache ? &cache->steps[l][t] : nullptr);
        if (l + 1 < shape_.layers) {
          if (between) {
            Mat<S> mask = dropout_mask<S>(H, B, dropout_, *rng);
            seq[t] = h.cwiseProduct(mask);
            if (cache) cache->masks[l].push_back(std::move(mask));
          } else {
            seq[t] = h;
          }
        }
      }
    }
    Mat<S> head_in = h;
    if (cache) cache->final_hidden = h;
    if (drop) {
      Mat<S> mask = dropout_mask<S>(H, B, dropout_, *rng);
      head_in = h.cwiseProduct(mask);
      if (cache) cache->head_mask = std::move(mask);
    } else if (cache) {
      cache->head_mask.resize(0, 0);
    }
    Mat<S> logits = view(params_, layout_[head_w_]) * head_in;
    logits.colwise() += view(params_, layout_[head_b_]).col(0);
    if (cache) cache->head_input = std::move(head_in);
    return logits;
  }

  /// Backpropagation through time. Overwrites `grad`.
  void backward(const Cache& cache, const Mat<S>& dlogits, Vec<S>& grad) const {
    grad.setZero(layout_.size());
    const int H = shape_.hidden;
    const std::size_t T = cache.steps.front().size();
    const Eigen::Index B = dlogits.cols();

    view(grad, layout_[head_w_]).noalias() = dlogits * cache.head_input.transpose();
    view(grad, layout_[head_b_]) = dlogits.rowwise().sum();
    Mat<S> dh_top = view(params_, layout_[head_w_]).transpose() * dlogits;
    if (cache.head_mask.size() > 0) dh_top = dh_top.cwiseProduct(cache.head_mask);

    // d(loss)/d(output of layer l at step t), filled by the layer above.
    std::vector<Mat<S>> d_out(T, Mat<S>::Zero(H, B));
    d_out[T - 1] = dh_top;

    for (int l = shape_.layers; l-- > 0;) {
      const auto wx = view(params_, layout_[wx_[l]]);
      const auto wh = view(params_, layout_[wh_[l]]);
      auto gwx = view(grad, layout_[wx_[l]]);
      auto gwh = view(grad, layout_[wh_[l]]);
      auto gb = view(grad, layout_[b_[l]]);
      std::vector<Mat<S>> d_in(T);
      Mat<S> dh_next = Mat<S>::Zero(H, B);
      Mat<S> da(3 * H, B);
      for (std::size_t t = T; t-- > 0;) {
        const auto& c = cache.steps[l][t];
        const Mat<S> dh = dh_next + d_out[t];
        const Mat<S> dz = dh.cwiseProduct(c.h_tilde - c.h_prev);
        const Mat<S> dht = dh.cwiseProduct(c.z);
        da.topRows(H) = dz.array() * c.z.array() * (S(1) - c.z.array());
        da.bottomRows(H) = dht.array() * (S(1) - c.h_tilde.array().square());
        const Mat<S> drh = wh.bottomRows(H).transpose() * da.bottomRows(H);
        da.middleRows(H, H) = drh.array() * c.h_prev.array() * c.r.array() * (S(1) - c.r.array());

        gwx.noalias() += da * c.x.transpose();
        gwh.topRows(2 * H).noalias() += da.topRows(2 * H) * c.h_prev.transpose();
        gwh.bottomRows(H).noalias() += da.bottomRows(H) * c.r.cwiseProduct(c.h_prev).transpose();
        gb += da.rowwise().sum();

        dh_next = dh.cwiseProduct((S(1) - c.z.array()).matrix()) + wh.topRows(2 * H).transpose() * da.topRows(2 * H) +
                  drh.cwiseProduct(c.r);
        if (l > 0) d_in[t] = wx.transpose() * da;
      }
      if (l > 0) {
        for (std::size_t t = 0; t < T; ++t) {
          d_out[t] = cache.masks[l - 1].empty() ? d_in[t] : Mat<S>(d_in[t].cwiseProduct(cache.masks[l - 1][t]));
        }
      }
    }
  }

 private:
  GruShape shape_;
  double dropout_ = 0.0;
  ParamLayout layout_;
  std::vector<std::size_t> wx_, wh_, b_;
  std::size_t head_w_ = 0, head_b_ = 0;
  Vec<S> params_;
};

/// Sum over heads of the mean cross-entropy. labels[h][j] is the class for head h, sample j.
template <typename S>
S multi_head_cross_entropy(const Mat<S>& logits, const std::vector<std::vector<int>>& labels, int classes,
                           Mat<S>* dlogits) {
  const std::size_t heads = labels.size();
  if (logits.rows() != static_cast<Eigen::Index>(heads) * classes)
    throw InvalidInput("multi_head_cross_entropy: logits rows do not match heads * classes");
  if (dlogits) dlogits->resize(logits.rows(), logits.cols());
  S total = 0;
  for (std::size_t h = 0; h < heads; ++h) {
    const Mat<S> block = logits.middleRows(h * classes, classes);
    Mat<S> d;
    total += batch_cross_entropy<S>(block, labels[h], dlogits ? &d : nullptr);
    if (dlogits) dlogits->middleRows(h * classes, classes) = d;
  }
  return total;
}

}  // namespace skybeam::nn
