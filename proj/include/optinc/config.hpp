#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace optinc {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes
// (config -> 2, numeric -> 3, io -> 4).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

class OverflowError : public std::runtime_error {
 public:
  explicit OverflowError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Quantizer applied to the averaged gradient. floor discards the decimal
// part; nearest_half_up rounds .5 up.
enum class Quantizer : std::uint8_t { floor = 0, nearest_half_up = 1 };

inline const char* to_string(Quantizer q) {
  return q == Quantizer::floor ? "floor" : "nearest-half-up";
}

// System-wide dimensions: B-bit gradients from N servers travel as M PAM4
// symbols; the preprocessing unit folds them down to K ONN inputs with
// group size g = ceil(M/K).
struct SystemConfig {
  unsigned bit_width = 8;   // B, even, >= 2
  unsigned servers = 2;     // N
  unsigned segments = 4;    // M = ceil(B/2)
  unsigned onn_inputs = 4;  // K <= M
  unsigned group = 1;       // g = ceil(M/K)
  Quantizer quantizer = Quantizer::floor;

  std::uint64_t code_range() const { return std::uint64_t{1} << bit_width; }
  std::uint64_t max_code() const { return code_range() - 1; }

  void validate() const {
    if (bit_width < 2 || bit_width % 2 != 0 || bit_width > 32)
      throw DomainError("bit_width must be even and in [2, 32], got " +
                        std::to_string(bit_width));
    if (servers < 1) throw DomainError("servers must be >= 1");
    if (segments != (bit_width + 1) / 2)
      throw DomainError("segments must equal ceil(bit_width/2)");
    if (onn_inputs < 1 || onn_inputs > segments)
      throw DomainError("onn_inputs must satisfy 1 <= K <= M");
    if (group != (segments + onn_inputs - 1) / onn_inputs)
      throw DomainError("group must equal ceil(M/K)");
  }
};

// Derives M and g from B and K and validates the result. This is the only
// sanctioned way to build a SystemConfig.
inline SystemConfig make_config(unsigned bit_width, unsigned servers,
                                unsigned onn_inputs,
                                Quantizer q = Quantizer::floor) {
  SystemConfig cfg;
  cfg.bit_width = bit_width;
  cfg.servers = servers;
  cfg.segments = (bit_width + 1) / 2;
  cfg.onn_inputs = onn_inputs;
  cfg.group = (cfg.segments + onn_inputs - 1) / onn_inputs;
  cfg.quantizer = q;
  cfg.validate();
  return cfg;
}

}  // namespace optinc
