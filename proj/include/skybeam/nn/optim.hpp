#pragma once

#include <cmath>
#include <vector>

#include "skybeam/nn/core.hpp"

namespace skybeam::nn {

/// Adam with bias-corrected moments. Run float training under DenormalGuard: second moments of
/// rarely-active weights decay into the denormal range, which is very slow on x86.
template <typename S>
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Vec<S> m, v;
  long step = 0;

  Adam() = default;
  explicit Adam(Eigen::Index n) : m(Vec<S>::Zero(n)), v(Vec<S>::Zero(n)) {}

  void update(Vec<S>& params, const Vec<S>& grad, double lr) {
    if (m.size() == 0 && v.size() == 0 && step == 0) {
      m = Vec<S>::Zero(params.size());
      v = Vec<S>::Zero(params.size());
    }
    if (grad.size() != params.size() || m.size() != params.size())
      throw InvalidInput("Adam: parameter/gradient/state shapes differ");
    ++step;
    const S b1 = static_cast<S>(beta1), b2 = static_cast<S>(beta2);
    const S a = static_cast<S>(lr / (1.0 - std::pow(beta1, static_cast<double>(step))));
    const S inv_c2 = static_cast<S>(1.0 / (1.0 - std::pow(beta2, static_cast<double>(step))));
    const S e = static_cast<S>(eps);
    m = b1 * m + (S(1) - b1) * grad;
    v = b2 * v + (S(1) - b2) * grad.cwiseProduct(grad);
    params.array() -= a * m.array() / ((v.array() * inv_c2).sqrt() + e);
  }
};

/// Base rate times `factor` for every decay epoch <= epoch (the named epoch already uses the decayed rate).
struct StepDecay {
  double base = 1e-2;
  std::vector<int> decay_epochs;
  double factor = 0.1;

  double lr_at(int epoch) const {
    if (epoch < 0) throw InvalidInput("lr_at: epoch must be >= 0");
    double lr = base;
    for (int e : decay_epochs)
      if (epoch >= e) lr *= factor;
    return lr;
  }
};

}  // namespace skybeam::nn
