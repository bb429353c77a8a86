#pragma once

#include <cstdint>
#include <string_view>

namespace rtsim {

// Deterministic random stream derived from one master seed and a stream name.
// Streams are independent of creation order, so adding a consumer does not
// shift the draws of existing ones.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::string_view name);

  std::uint64_t next_u64();

  // Uniform in (0, 1]. Excludes zero so ln(u) is always defined.
  double uniform_open01();

  // Uniform integer in [0, n).
  std::uint64_t uniform_below(std::uint64_t n);

  double normal(double mean, double stddev);

  // Normal resampled until >= lo.
  double normal_truncated(double mean, double stddev, double lo);

 private:
  std::uint64_t state_;
};

}  // namespace rtsim
