#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "capslab/env.hpp"
#include "capslab/errors.hpp"
#include "capslab/rng.hpp"

namespace capslab {

/// Fixed-capacity ring of transitions with uniform batch sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be positive");
  }

  void add(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_[i]; }

  /// Uniform sample of distinct indices (Floyd's subset sampling: every
  /// k-subset equally likely, so marginals are uniform).
  std::vector<std::size_t> sample_indices(std::size_t k, Rng& rng) const {
    const std::size_t n = data_.size();
    if (k > n) throw UsageError("ReplayBuffer: batch larger than stored transitions");
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t j = n - k; j < n; ++j) {
      const std::size_t r = rng.index(j + 1);
      if (std::find(out.begin(), out.end(), r) != out.end())
        out.push_back(j);
      else
        out.push_back(r);
    }
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> data_;
};

}  // namespace capslab
