#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "skybeam/nn/core.hpp"

namespace skybeam::nn {

/// Fully connected classifier: rectifier hidden layers, linear output (logits).
/// Activations are column-major batches: one sample per column.
template <typename S>
class DenseNet {
 public:
  struct Cache {
    std::vector<Mat<S>> activations;  // [0] = input, [i] = output of hidden layer i
  };

  DenseNet() = default;

  /// widths = {input, hidden..., classes}.
  DenseNet(std::vector<int> widths, std::uint64_t seed) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw InvalidInput("DenseNet: need at least input and output widths");
    for (int w : widths_)
      if (w < 1) throw InvalidInput("DenseNet: widths must be >= 1");
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      weights_.push_back(layout_.add("dense" + std::to_string(l) + ".weight", widths_[l + 1], widths_[l]));
      biases_.push_back(layout_.add("dense" + std::to_string(l) + ".bias", widths_[l + 1], 1));
    }
    params_ = Vec<S>::Zero(layout_.size());
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const bool classifier = l + 1 == weights_.size();
      if (classifier) {
        init_normal<S>(view(params_, layout_[weights_[l]]), 0.01, rng);
      } else {
        init_fan_in<S>(view(params_, layout_[weights_[l]]), widths_[l], rng);
        init_fan_in<S>(view(params_, layout_[biases_[l]]), widths_[l], rng);
      }
    }
  }

  const std::vector<int>& widths() const { return widths_; }
  int input_width() const { return widths_.front(); }
  int num_classes() const { return widths_.back(); }
  std::size_t num_layers() const { return weights_.size(); }
  const ParamLayout& layout() const { return layout_; }
  Vec<S>& params() { return params_; }
  const Vec<S>& params() const { return params_; }

  Eigen::Map<const Mat<S>> weight(std::size_t l) const { return view(params_, layout_[weights_[l]]); }
  Eigen::Map<const Mat<S>> bias(std::size_t l) const { return view(params_, layout_[biases_[l]]); }
  Eigen::Map<Mat<S>> weight(std::size_t l) { return view(params_, layout_[weights_[l]]); }
  Eigen::Map<Mat<S>> bias(std::size_t l) { return view(params_, layout_[biases_[l]]); }

  Mat<S> forward(const Mat<S>& x, Cache* cache = nullptr) const {
    if (x.rows() != input_width())
      throw InvalidInput("DenseNet: input width " + std::to_string(x.rows()) + " != " + std::to_string(input_width()));
    if (cache) {
      cache->activations.clear();
      cache->activations.push_back(x);
    }
    Mat<S> a = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Mat<S> z = weight(l) * a;
      z.colwise() += bias(l).col(0);
      if (l + 1 < weights_.size()) {
        a = z.cwiseMax(S(0));
        if (cache) cache->activations.push_back(a);
      } else {
        a = std::move(z);
      }
    }
    return a;
  }

  /// Gradient of the loss w.r.t. all parameters, given d(loss)/d(logits). Overwrites `grad`.
  void backward(const Cache& cache, const Mat<S>& dlogits, Vec<S>& grad) const {
    grad.setZero(layout_.size());
    Mat<S> delta = dlogits;
    for (std::size_t l = weights_.size(); l-- > 0;) {
      const Mat<S>& input = cache.activations[l];
      view(grad, layout_[weights_[l]]).noalias() = delta * input.transpose();
      view(grad, layout_[biases_[l]]) = delta.rowwise().sum();
      if (l == 0) break;
      Mat<S> back = weight(l).transpose() * delta;
      delta = (input.array() > S(0)).select(back, S(0));
    }
  }

 private:
  std::vector<int> widths_;
  ParamLayout layout_;
  std::vector<std::size_t> weights_, biases_;
  Vec<S> params_;
};

}  // namespace skybeam::nn
