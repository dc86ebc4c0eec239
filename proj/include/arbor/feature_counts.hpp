#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace arbor {

// The m x n matrix N: column i counts the timesteps trajectory i spends in
// each leaf. Stored column-major so a trajectory's counts are contiguous.
class FeatureCounts {
 public:
  FeatureCounts() = default;
  FeatureCounts(std::size_t leaves, std::size_t trajectories)
      : m_(leaves), n_(trajectories), data_(leaves * trajectories, 0) {}

  std::size_t leaves() const { return m_; }
  std::size_t trajectories() const { return n_; }

  long operator()(std::size_t x, std::size_t i) const { return data_[i * m_ + x]; }
  long& operator()(std::size_t x, std::size_t i) { return data_[i * m_ + x]; }

  std::span<const long> column(std::size_t i) const { return {data_.data() + i * m_, m_}; }

  long column_sum(std::size_t i) const {
    long s = 0;
    for (long v : column(i)) s += v;
    return s;
  }

  friend bool operator==(const FeatureCounts&, const FeatureCounts&) = default;

 private:
  std::size_t m_ = 0;
  std::size_t n_ = 0;
  std::vector<long> data_;
};

}  // namespace arbor
