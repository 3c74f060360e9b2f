#pragma once

#include <array>
#include <cstdint>

namespace egolstm {

// Philox4x32-10 counter-based generator. The output stream is a pure function
// of (seed, stream, counter), so it is identical on every platform and a
// substream can be derived for any index without advancing the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  // Independent generator for `index`; does not consume parent state.
  Rng split(std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int available_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

// One Philox4x32-10 block.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

}  // namespace egolstm
