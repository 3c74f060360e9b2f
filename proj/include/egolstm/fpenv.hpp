#pragma once

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace egolstm {

// Flushes subnormal results and operands to zero for the enclosing scope and
// restores the previous mode on exit. Float32 training drifts into subnormals
// (decaying RMSProp accumulators, saturated gates), where x86 arithmetic is
// two orders of magnitude slower.
class FlushDenormalsScope {
 public:
#if defined(__SSE2__)
  FlushDenormalsScope() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | kFtz | kDaz); }
  ~FlushDenormalsScope() { _mm_setcsr(saved_); }
#else
  FlushDenormalsScope() = default;
#endif
  FlushDenormalsScope(const FlushDenormalsScope&) = delete;
  FlushDenormalsScope& operator=(const FlushDenormalsScope&) = delete;

 private:
#if defined(__SSE2__)
  static constexpr unsigned kFtz = 0x8000;
  static constexpr unsigned kDaz = 0x0040;
  unsigned saved_;
#endif
};

}  // namespace egolstm
