// Copyright 2026 The dpens Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPENS_EMBEDDING_HPP_
#define DPENS_EMBEDDING_HPP_

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace dpens {

// A fixed-dimension real vector.  Backend-produced embeddings are unit norm;
// derived vectors (means, noisy means) need not be.
struct Embedding {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }

  double norm() const {
    double sq = 0.0;
    for (const double v : values) sq += v * v;
    return std::sqrt(sq);
  }

  // Scales to unit norm.  Backends call this defensively so downstream code
  // may rely on ||e|| = 1 within 1e-6.
  Embedding& normalize() {
    const double n = norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw std::invalid_argument(
          "Embedding::normalize: vector has no direction (zero or non-finite "
          "norm)");
    }
    for (double& v : values) v /= n;
    return *this;
  }
};

inline double dot(const Embedding& a, const Embedding& b) {
  if (a.dimension() != b.dimension()) {
    throw std::invalid_argument("dot: embedding dimensions differ");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    s += a.values[i] * b.values[i];
  }
  return s;
}

// Cosine similarity; errors on zero-norm inputs rather than guessing.
inline double cosine_similarity(const Embedding& a, const Embedding& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw std::invalid_argument(
        "cosine_similarity: undefined for zero-norm vectors");
  }
  return dot(a, b) / (na * nb);
}

// Element-wise mean of a non-empty set of same-dimension embeddings.
inline Embedding mean_embedding(const std::vector<Embedding>& embeddings) {
  if (embeddings.empty()) {
    throw std::invalid_argument("mean_embedding: empty input");
  }
  const std::size_t dim = embeddings.front().dimension();
  Embedding out;
  out.values.assign(dim, 0.0);
  for (const Embedding& e : embeddings) {
    if (e.dimension() != dim) {
      throw std::invalid_argument("mean_embedding: dimensions differ");
    }
    for (std::size_t i = 0; i < dim; ++i) out.values[i] += e.values[i];
  }
  for (double& v : out.values) v /= static_cast<double>(embeddings.size());
  return out;
}

}  // namespace dpens

#endif  // DPENS_EMBEDDING_HPP_
