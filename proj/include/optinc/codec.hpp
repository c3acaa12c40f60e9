#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "optinc/config.hpp"

namespace optinc {

// A B-bit fixed-point gradient code, 0 .. 2^B - 1.
struct GradientWord {
  std::uint64_t code = 0;
  bool operator==(const GradientWord&) const = default;
};

// M PAM4 symbols, most significant 2-bit segment first.
struct Pam4Frame {
  std::vector<std::uint8_t> symbols;
  bool operator==(const Pam4Frame&) const = default;
};

// Received analog levels before transceiver snapping. last_channel_step < 1
// marks the carry-extended final channel used by cascaded topologies.
struct AnalogFrame {
  std::vector<double> levels;
  double last_channel_step = 1.0;
};

// Affine bridge between signed real gradients and unsigned B-bit codes
// (offset binary): lo -> 0, hi -> 2^B - 1.
struct FixedPointScale {
  double lo = -1.0;
  double hi = 1.0;
};

inline Pam4Frame encode_pam4(GradientWord g, const SystemConfig& cfg) {
  if (g.code > cfg.max_code())
    throw DomainError("gradient code " + std::to_string(g.code) +
                      " out of range for B=" + std::to_string(cfg.bit_width));
  Pam4Frame f;
  f.symbols.resize(cfg.segments);
  for (unsigned i = 1; i <= cfg.segments; ++i)
    f.symbols[i - 1] =
        static_cast<std::uint8_t>((g.code >> (2 * (cfg.segments - i))) & 0x3u);
  return f;
}

inline GradientWord decode_pam4(const Pam4Frame& f, const SystemConfig& cfg) {
  if (f.symbols.size() != cfg.segments)
    throw DomainError("frame length " + std::to_string(f.symbols.size()) +
                      " != M=" + std::to_string(cfg.segments));
  std::uint64_t code = 0;
  for (std::uint8_t s : f.symbols) {
    if (s > 3) throw DomainError("PAM4 symbol out of {0..3}");
    code = (code << 2) | s;
  }
  return GradientWord{code};
}

namespace detail {
// round half up on a double
inline double round_hu(double x) { return std::floor(x + 0.5); }
}  // namespace detail

// Transceiver-side snapping: each level rounds to its channel grid (step 1,
// or last_channel_step on the final channel), ties up, then clamps. The
// extended final channel admits the level-1 carry range [0, 3 + (N-1)*step].
inline AnalogFrame snap_to_grid(const AnalogFrame& a, const SystemConfig& cfg) {
  AnalogFrame out;
  out.levels.resize(a.levels.size());
  out.last_channel_step = a.last_channel_step;
  for (std::size_t i = 0; i < a.levels.size(); ++i) {
    const double x = a.levels[i];
    if (!std::isfinite(x)) throw DomainError("non-finite analog level");
    const bool extended =
        (i + 1 == a.levels.size()) && a.last_channel_step != 1.0;
    if (!extended) {
      double v = detail::round_hu(x);
      out.levels[i] = std::min(3.0, std::max(0.0, v));
    } else {
      const double step = a.last_channel_step;
      long long idx = static_cast<long long>(detail::round_hu(x / step));
      const long long idx_max =
          std::llround(3.0 / step) + static_cast<long long>(cfg.servers) - 1;
      idx = std::min(idx_max, std::max(0LL, idx));
      out.levels[i] = static_cast<double>(idx) * step;
    }
  }
  return out;
}

// A snapped standard frame is integer-valued; convert it back to symbols.
inline Pam4Frame to_pam4(const AnalogFrame& a) {
  Pam4Frame f;
  f.symbols.reserve(a.levels.size());
  for (double v : a.levels) {
    const double r = detail::round_hu(v);
    if (std::abs(v - r) > 1e-9 || r < 0.0 || r > 3.0)
      throw DomainError("analog level " + std::to_string(v) +
                        " is not a PAM4 grid point");
    f.symbols.push_back(static_cast<std::uint8_t>(r));
  }
  return f;
}

inline GradientWord real_to_word(double x, const FixedPointScale& s,
                                 const SystemConfig& cfg) {
  if (!(s.hi > s.lo)) throw DomainError("degenerate fixed-point scale");
  const double span = static_cast<double>(cfg.max_code());
  double v = detail::round_hu((x - s.lo) / (s.hi - s.lo) * span);
  v = std::min(span, std::max(0.0, v));
  return GradientWord{static_cast<std::uint64_t>(v)};
}

inline double word_to_real(GradientWord w, const FixedPointScale& s,
                           const SystemConfig& cfg) {
  if (!(s.hi > s.lo)) throw DomainError("degenerate fixed-point scale");
  return s.lo + static_cast<double>(w.code) * (s.hi - s.lo) /
                    static_cast<double>(cfg.max_code());
}

}  // namespace optinc
