#pragma once

// Shared pieces of the neural toolkit: flat parameter storage, softmax
// cross-entropy, inverted dropout and ranking.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "skybeam/error.hpp"

#if defined(__SSE__) || defined(_M_X64)
#include <xmmintrin.h>
#define SKYBEAM_HAS_MXCSR 1
#endif

namespace skybeam::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Location of one weight matrix (column-major) inside a flat parameter vector.
struct Slot {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index size() const { return rows * cols; }
};

/// Every model keeps all its trainable values in one flat vector so the optimizer,
/// the gradient checker and checkpoints can treat it uniformly.
class ParamLayout {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    slots_.push_back({std::move(name), total_, rows, cols});
    total_ += rows * cols;
    return slots_.size() - 1;
  }
  Eigen::Index size() const { return total_; }
  const std::vector<Slot>& slots() const { return slots_; }
  const Slot& operator[](std::size_t i) const { return slots_[i]; }

  bool operator==(const ParamLayout& o) const {
    if (slots_.size() != o.slots_.size() || total_ != o.total_) return false;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      const auto &a = slots_[i], &b = o.slots_[i];
      if (a.name != b.name || a.offset != b.offset || a.rows != b.rows || a.cols != b.cols) return false;
    }
    return true;
  }

 private:
  std::vector<Slot> slots_;
  Eigen::Index total_ = 0;
};

template <typename S>
Eigen::Map<Mat<S>> view(Vec<S>& flat, const Slot& s) {
  return Eigen::Map<Mat<S>>(flat.data() + s.offset, s.rows, s.cols);
}

template <typename S>
Eigen::Map<const Mat<S>> view(const Vec<S>& flat, const Slot& s) {
  return Eigen::Map<const Mat<S>>(flat.data() + s.offset, s.rows, s.cols);
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename S, typename Rng>
void init_fan_in(Eigen::Map<Mat<S>> m, Eigen::Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<S>(u(rng));
}

/// N(0, 1) * scale, used for classifier weights.
template <typename S, typename Rng>
void init_normal(Eigen::Map<Mat<S>> m, double scale, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<S>(scale * n(rng));
}

/// Enables flush-to-zero / denormals-are-zero for the current thread while alive.
class DenormalGuard {
 public:
  DenormalGuard() {
#ifdef SKYBEAM_HAS_MXCSR
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040);  // FTZ | DAZ
#endif
  }
  ~DenormalGuard() {
#ifdef SKYBEAM_HAS_MXCSR
    _mm_setcsr(saved_);
#endif
  }
  DenormalGuard(const DenormalGuard&) = delete;
  DenormalGuard& operator=(const DenormalGuard&) = delete;

 private:
  unsigned saved_ = 0;
};

// ---------------------------------------------------------------------------
// Softmax / cross-entropy

template <typename S>
Vec<S> softmax(const Eigen::Ref<const Vec<S>>& logits) {
  if (logits.size() == 0) throw InvalidInput("softmax: empty logits");
  const S m = logits.maxCoeff();
  Vec<S> e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

template <typename S>
struct LossAndGrad {
  S loss = 0;
  Vec<S> grad;
};

/// -log softmax(logits)[cls] with max subtraction; gradient = softmax - onehot.
template <typename S>
LossAndGrad<S> softmax_cross_entropy(const Eigen::Ref<const Vec<S>>& logits, int cls) {
  if (cls < 0 || cls >= logits.size()) throw InvalidInput("softmax_cross_entropy: class index out of range");
  const S m = logits.maxCoeff();
  const Vec<S> shifted = (logits.array() - m).matrix();
  const S lse = std::log(shifted.array().exp().sum());
  LossAndGrad<S> out;
  out.loss = lse - shifted(cls);
  out.grad = (shifted.array() - lse).exp().matrix();
  out.grad(cls) -= S(1);
  return out;
}

/// Mean cross-entropy over the columns of `logits` (classes x batch). Writes d(mean loss)/d(logits)
/// into `dlogits` scaled by `grad_scale` when provided.
template <typename S>
S batch_cross_entropy(const Mat<S>& logits, std::span<const int> labels, Mat<S>* dlogits, S grad_scale = S(1)) {
  const Eigen::Index n = logits.cols();
  if (n == 0 || static_cast<Eigen::Index>(labels.size()) != n)
    throw InvalidInput("batch_cross_entropy: label count does not match batch");
  if (dlogits) dlogits->resize(logits.rows(), n);
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto lg = softmax_cross_entropy<S>(logits.col(j), labels[j]);
    total += static_cast<double>(lg.loss);
    if (dlogits) dlogits->col(j) = lg.grad * (grad_scale / static_cast<S>(n));
  }
  return static_cast<S>(total / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Dropout

/// Inverted dropout mask: kept entries scaled by 1/(1-p).
template <typename S, typename Rng>
Mat<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Mat<S> mask(rows, cols);
  if (p <= 0.0) {
    mask.setOnes();
    return mask;
  }
  std::bernoulli_distribution keep(1.0 - p);
  const S scale = static_cast<S>(1.0 / (1.0 - p));
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = keep(rng) ? scale : S(0);
  return mask;
}

// ---------------------------------------------------------------------------
// Ranking

/// Indices of the k largest scores, descending, ties to the lower index.
template <typename T>
std::vector<int> top_k(std::span<const T> scores, int k) {
  const int n = static_cast<int>(scores.size());
  if (k < 1 || k > n) throw InvalidInput("top_k: k must be in [1, " + std::to_string(n) + "]");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const auto better = [&](int a, int b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), better);
  idx.resize(k);
  return idx;
}

template <typename S>
std::vector<int> top_k(const Vec<S>& scores, int k) {
  return top_k(std::span<const S>(scores.data(), static_cast<std::size_t>(scores.size())), k);
}

}  // namespace skybeam::nn
