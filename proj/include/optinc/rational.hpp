#pragma once

#include <cstdint>
#include <numeric>
#include <string>

#include "optinc/config.hpp"

namespace optinc {

// Small exact rational. Oracle arithmetic (averaging, carries, grid values)
// runs on these so that every ground-truth value is bit-exact; magnitudes
// stay tiny (numerators bounded by N * 2^B), so int64 is ample.
struct Rat {
  std::int64_t num = 0;
  std::int64_t den = 1;  // always > 0, gcd(num, den) == 1

  Rat() = default;
  Rat(std::int64_t n, std::int64_t d = 1) : num(n), den(d) { normalize(); }

  void normalize() {
    if (den == 0) throw NumericError("rational with zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool is_integer() const { return den == 1; }
  bool is_zero() const { return num == 0; }

  // floor(num/den) for any sign
  std::int64_t floor_int() const {
    std::int64_t q = num / den;
    if (num % den != 0 && num < 0) --q;
    return q;
  }

  // round half up: floor(x + 1/2)
  std::int64_t round_half_up() const { return Rat(2 * num + den, 2 * den).floor_int(); }

  Rat operator+(const Rat& o) const { return Rat(num * o.den + o.num * den, den * o.den); }
  Rat operator-(const Rat& o) const { return Rat(num * o.den - o.num * den, den * o.den); }
  Rat operator*(std::int64_t k) const { return Rat(num * k, den); }
  Rat operator/(std::int64_t k) const { return Rat(num, den * k); }
  bool operator==(const Rat& o) const { return num == o.num && den == o.den; }
  bool operator!=(const Rat& o) const { return !(*this == o); }
  bool operator<(const Rat& o) const { return num * o.den < o.num * den; }

  std::string str() const {
    if (den == 1) return std::to_string(num);
    return std::to_string(num) + "/" + std::to_string(den);
  }
};

}  // namespace optinc
