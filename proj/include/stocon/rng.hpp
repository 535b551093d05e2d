#pragma once

// Counter-based Gaussian streams for reproducible parallel Monte Carlo.
//
// Every stream is a pure function of (master_seed, path_index, stream_id) and
// a block counter advanced in draw order, so a path produces the same numbers
// no matter which worker runs it or in what order paths are scheduled.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include <Eigen/Core>

#include "stocon/errors.hpp"

namespace stocon::rng {

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  static constexpr Counter round(const Counter& c, const Key& k) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }

  static constexpr Counter generate(Counter c, Key k) {
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        k[0] += kW0;
        k[1] += kW1;
      }
      c = round(c, k);
    }
    return c;
  }
};

/// Reserved stream ids. Trajectory ids 1 and 2 drive the two members of a
/// pair; 0 is used for sampling initial conditions.
inline constexpr std::uint32_t kInitStream = 0;
inline constexpr std::uint32_t kTrajectoryA = 1;
inline constexpr std::uint32_t kTrajectoryB = 2;

/// Uniforms in (0,1) and standard normals (Box–Muller) from one Philox stream.
class GaussianStream {
 public:
  GaussianStream(std::uint64_t master_seed, std::uint64_t path_index,
                 std::uint32_t stream_id)
      : key_{static_cast<std::uint32_t>(master_seed),
             static_cast<std::uint32_t>(master_seed >> 32)},
        path_lo_(static_cast<std::uint32_t>(path_index)),
        stream_id_(stream_id) {
    require(path_index <= 0xFFFFFFFFull, ErrorKind::kInvalidArgument,
            "path index must fit in 32 bits");
  }

  /// Two uniforms per Philox block, 53 bits each, never exactly 0 or 1.
  double next_uniform() {
    if (uniform_pos_ == 2) refill();
    return uniforms_[uniform_pos_++];
  }

  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <class Vector>
  void fill_normal(Vector& out) {
    for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = next_normal();
  }

  std::uint64_t blocks_used() const { return block_; }

 private:
  void refill() {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(block_),
                                  static_cast<std::uint32_t>(block_ >> 32),
                                  path_lo_, stream_id_};
    const auto out = Philox4x32::generate(ctr, key_);
    ++block_;
    const std::uint64_t a = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    const std::uint64_t b = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
    constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
    uniforms_[0] = (static_cast<double>(a >> 11) + 0.5) * kScale;
    uniforms_[1] = (static_cast<double>(b >> 11) + 0.5) * kScale;
    uniform_pos_ = 0;
  }

  Philox4x32::Key key_;
  std::uint32_t path_lo_;
  std::uint32_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<double, 2> uniforms_{};
  int uniform_pos_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace stocon::rng
