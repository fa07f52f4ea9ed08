// SPDX-License-Identifier: Apache-2.0
#include "beamfuse/tensorkit.hpp"

#include <omp.h>

#include <bit>
#include <cstdint>
#include <limits>

namespace beamfuse {

const char* to_string(PrecisionMode mode) {
  return mode == PrecisionMode::full32 ? "full32" : "emulated16";
}

PrecisionMode parse_precision(const std::string& name) {
  if (name == "full32") return PrecisionMode::full32;
  if (name == "emulated16") return PrecisionMode::emulated16;
  throw ValueError("unknown precision mode '" + name + "' (expected full32 or emulated16)");
}

float round_to_half(float x) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
  const std::uint32_t sign = bits & 0x80000000u;
  const std::uint32_t mag = bits & 0x7fffffffu;

  if (mag >= 0x7f800000u) return x;  // inf, nan

  if (mag < 0x38800000u) {
    // Below the smallest normal half (2^-14): quantize to multiples of 2^-24.
    const float scaled = std::bit_cast<float>(mag) * 0x1.0p24f;  // exact, < 1024
    auto units = static_cast<std::uint32_t>(scaled);
    const float frac = scaled - static_cast<float>(units);
    if (frac > 0.5f || (frac == 0.5f && (units & 1u))) ++units;
    const float r = static_cast<float>(units) * 0x1.0p-24f;
    return std::bit_cast<float>(std::bit_cast<std::uint32_t>(r) | sign);
  }

  // Normal range: drop 13 of the 23 mantissa bits with ties-to-even.
  const std::uint32_t lsb = (mag >> 13) & 1u;
  std::uint32_t rounded = (mag + 0x0fffu + lsb) & ~0x1fffu;
  if (rounded >= 0x47800000u) rounded = 0x7f800000u;  // >= 65536 overflows binary16
  return std::bit_cast<float>(rounded | sign);
}

void set_num_threads(int n) {
  if (n < 1) throw ValueError("thread count must be >= 1");
  omp_set_num_threads(n);
}

int num_threads() { return omp_get_max_threads(); }

}  // namespace beamfuse
