#pragma once

// Central-difference gradient verification over a random subset of coordinates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "skybeam/nn/core.hpp"

namespace skybeam::nn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  long coordinates = 0;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  bool passed(double tolerance) const { return max_rel_error <= tolerance; }
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true derivative is ~0 from
/// dividing rounding noise by rounding noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Two-point (f(x+h) - f(x-h)) / 2h, or the five-point stencil, which permits a larger step on smooth
/// objectives and so keeps rounding noise well below tiny derivatives.
enum class Stencil { kTwoPoint, kFivePoint };

/// `loss` evaluates the objective at the current contents of `params`; `analytic` is the gradient at
/// the unperturbed point. `params` is restored before returning.
inline GradCheckReport grad_check(Vec<double>& params, const std::function<double()>& loss,
                                  const Vec<double>& analytic, long coordinates = 256, double step = 1e-5,
                                  std::uint64_t seed = 1, Stencil stencil = Stencil::kTwoPoint) {
  if (analytic.size() != params.size()) throw InvalidInput("grad_check: gradient size does not match parameters");
  const Eigen::Index n = params.size();
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (coordinates < n) {
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(coordinates);
  }
  GradCheckReport rep;
  double sum = 0.0;
  for (Eigen::Index i : idx) {
    const double orig = params(i);
    const auto at = [&](double offset) {
      params(i) = orig + offset;
      return loss();
    };
    double numeric = 0.0;
    if (stencil == Stencil::kTwoPoint) {
      numeric = (at(step) - at(-step)) / (2.0 * step);
    } else {
      numeric = (-at(2 * step) + 8.0 * at(step) - 8.0 * at(-step) + at(-2 * step)) / (12.0 * step);
    }
    params(i) = orig;
    const double err = relative_error(analytic(i), numeric);
    sum += err;
    ++rep.coordinates;
    if (err > rep.max_rel_error || rep.worst_index < 0) {
      rep.max_rel_error = err;
      rep.worst_index = i;
      rep.worst_analytic = analytic(i);
      rep.worst_numeric = numeric;
    }
  }
  rep.mean_rel_error = rep.coordinates ? sum / static_cast<double>(rep.coordinates) : 0.0;
  return rep;
}

}  // namespace skybeam::nn
