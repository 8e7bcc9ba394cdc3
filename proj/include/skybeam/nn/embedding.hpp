#pragma once

#include <cstdint>
#include <random>

#include "skybeam/nn/core.hpp"

namespace skybeam::nn {

/// Fixed lookup table of i.i.d. N(0, 1) rows, one per beam. Never trained.
struct EmbeddingTable {
  Mat<double> table;  // num_beams x dim

  static EmbeddingTable build(int num_beams = 32, int dim = 20, std::uint64_t seed = 0) {
    if (num_beams < 1 || dim < 1) throw InvalidInput("EmbeddingTable: shape must be positive");
    EmbeddingTable e;
    e.table.resize(num_beams, dim);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < num_beams; ++i)
      for (int j = 0; j < dim; ++j) e.table(i, j) = n(rng);
    return e;
  }

  int num_beams() const { return static_cast<int>(table.rows()); }
  int dim() const { return static_cast<int>(table.cols()); }

  Vec<double> row(int beam) const {
    if (beam < 0 || beam >= num_beams()) throw InvalidInput("EmbeddingTable: beam index out of range");
    return table.row(beam).transpose();
  }

  bool operator==(const EmbeddingTable& o) const { return table == o.table; }
};

}  // namespace skybeam::nn
