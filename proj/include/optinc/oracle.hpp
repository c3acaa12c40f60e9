#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "optinc/codec.hpp"
#include "optinc/config.hpp"
#include "optinc/rational.hpp"
#include "optinc/rng.hpp"

namespace optinc {

// K averaged ONN inputs, each an exact multiple of 1/N in [0, 4^g - 1]
// (the last channel of a cascade level-2 input carries denominator N^2).
struct PreprocessedVector {
  std::vector<Rat> a;
};

// One training/eval record. carry is zero except in cascade level-1
// datasets, where it is the decimal part kept by Eq.-10-style correction
// and is already merged into the last target symbol.
struct AggregationSample {
  PreprocessedVector inputs;
  std::vector<Rat> target_symbols;  // M symbols, last possibly carry-extended
  GradientWord target_word{};
  Rat carry{0, 1};
};

enum class DatasetMode : std::uint8_t { exhaustive = 0, sampled = 1 };

struct AggregationDataset {
  SystemConfig cfg;
  DatasetMode mode = DatasetMode::exhaustive;
  std::uint64_t seed = 0;
  unsigned cascade_level = 0;  // 0 = basic, 1/2 = cascade levels (in-memory only)
  std::vector<AggregationSample> samples;
};

namespace detail {

inline std::int64_t pow4(unsigned e) { return std::int64_t{1} << (2 * e); }

// Number of leading zero pad symbols when M is not divisible by K.
inline unsigned pad_symbols(const SystemConfig& cfg) {
  return cfg.onn_inputs * cfg.group - cfg.segments;
}

// Max per-server group value for channel k (1-based). Channel 1 absorbs the
// zero padding, so its range shrinks when K does not divide M.
inline std::int64_t channel_max(const SystemConfig& cfg, unsigned k) {
  const unsigned eff = (k == 1) ? cfg.group - pad_symbols(cfg) : cfg.group;
  return pow4(eff) - 1;
}

// Base-4 positional weight of channel k in the reconstructed word.
inline std::int64_t channel_weight(const SystemConfig& cfg, unsigned k) {
  return std::int64_t{1} << (2 * cfg.group * (cfg.onn_inputs - k));
}

}  // namespace detail

inline std::int64_t apply_quantizer(const Rat& mean, Quantizer q) {
  return q == Quantizer::floor ? mean.floor_int() : mean.round_half_up();
}

// Q((1/N) * sum of words) in exact integer arithmetic.
inline GradientWord quantized_average(std::span<const GradientWord> words,
                                      const SystemConfig& cfg) {
  if (words.empty()) throw DomainError("quantized_average of empty word set");
  if (words.size() != cfg.servers)
    throw DomainError("expected " + std::to_string(cfg.servers) + " words, got " +
                      std::to_string(words.size()));
  std::int64_t sum = 0;
  for (const GradientWord& w : words) {
    if (w.code > cfg.max_code()) throw DomainError("gradient code out of range");
    sum += static_cast<std::int64_t>(w.code);
  }
  const std::int64_t q =
      apply_quantizer(Rat(sum, static_cast<std::int64_t>(cfg.servers)), cfg.quantizer);
  return GradientWord{static_cast<std::uint64_t>(q)};
}

// The preprocessing unit P: recombine every g symbols base-4 within each
// server's frame (leading-zero padded to K*g), then average channel-wise
// across the N servers. Exact rational output.
inline PreprocessedVector preprocess(std::span<const Pam4Frame> frames,
                                     const SystemConfig& cfg) {
  if (frames.size() != cfg.servers)
    throw DomainError("preprocess expects N=" + std::to_string(cfg.servers) +
                      " frames, got " + std::to_string(frames.size()));
  const unsigned pad = detail::pad_symbols(cfg);
  PreprocessedVector out;
  out.a.resize(cfg.onn_inputs);
  std::vector<std::int64_t> sums(cfg.onn_inputs, 0);
  for (const Pam4Frame& f : frames) {
    if (f.symbols.size() != cfg.segments)
      throw DomainError("frame length != M in preprocess");
    for (unsigned k = 1; k <= cfg.onn_inputs; ++k) {
      std::int64_t v = 0;
      for (unsigned j = 1; j <= cfg.group; ++j) {
        const long long pos =
            static_cast<long long>((k - 1) * cfg.group + j) - 1 - pad;
        const std::uint8_t s = pos < 0 ? 0 : f.symbols[static_cast<std::size_t>(pos)];
        if (s > 3) throw DomainError("PAM4 symbol out of {0..3}");
        v = v * 4 + s;
      }
      sums[k - 1] += v;
    }
  }
  for (unsigned k = 0; k < cfg.onn_inputs; ++k)
    out.a[k] = Rat(sums[k], static_cast<std::int64_t>(cfg.servers));
  return out;
}

// Rational-symbol variant used by the cascade, where level-1 output frames
// carry a fractional last symbol.
inline PreprocessedVector preprocess_symbols(
    const std::vector<std::vector<Rat>>& frames, const SystemConfig& cfg) {
  if (frames.size() != cfg.servers)
    throw DomainError("preprocess expects N frames");
  const unsigned pad = detail::pad_symbols(cfg);
  PreprocessedVector out;
  out.a.assign(cfg.onn_inputs, Rat(0));
  for (const auto& f : frames) {
    if (f.size() != cfg.segments) throw DomainError("frame length != M");
    for (unsigned k = 1; k <= cfg.onn_inputs; ++k) {
      Rat v(0);
      for (unsigned j = 1; j <= cfg.group; ++j) {
        const long long pos =
            static_cast<long long>((k - 1) * cfg.group + j) - 1 - pad;
        const Rat s = pos < 0 ? Rat(0) : f[static_cast<std::size_t>(pos)];
        v = v * 4 + s;
      }
      out.a[k - 1] = out.a[k - 1] + v;
    }
  }
  for (auto& v : out.a) v = v / static_cast<std::int64_t>(cfg.servers);
  return out;
}

// Exact mean reconstructed from a preprocessed vector:
// sum_k 4^{(K-k)g} * a_k. Equals (1/N) * sum of the source words.
inline Rat grid_mean(const PreprocessedVector& v, const SystemConfig& cfg) {
  if (v.a.size() != cfg.onn_inputs)
    throw DomainError("preprocessed vector length != K");
  Rat mean(0);
  for (unsigned k = 1; k <= cfg.onn_inputs; ++k)
    mean = mean + v.a[k - 1] * detail::channel_weight(cfg, k);
  return mean;
}

// Target symbols (and optionally the kept decimal part) for a word set:
// the PAM4 digits of Q(mean), with the carry merged into the last symbol
// when keep_carry is set.
inline std::pair<std::vector<Rat>, Rat> expected_outputs(
    std::span<const GradientWord> words, const SystemConfig& cfg,
    bool keep_carry = false) {
  std::int64_t sum = 0;
  if (words.empty()) throw DomainError("expected_outputs of empty word set");
  for (const GradientWord& w : words) {
    if (w.code > cfg.max_code()) throw DomainError("gradient code out of range");
    sum += static_cast<std::int64_t>(w.code);
  }
  const Rat mean(sum, static_cast<std::int64_t>(cfg.servers));
  const std::int64_t word = apply_quantizer(mean, cfg.quantizer);
  const Pam4Frame digits =
      encode_pam4(GradientWord{static_cast<std::uint64_t>(word)}, cfg);
  std::vector<Rat> symbols(cfg.segments);
  for (unsigned i = 0; i < cfg.segments; ++i) symbols[i] = Rat(digits.symbols[i]);
  Rat carry(0);
  if (keep_carry) {
    carry = mean - Rat(word);
    symbols[cfg.segments - 1] = symbols[cfg.segments - 1] + carry;
  }
  return {symbols, carry};
}

// (N(4^g - 1) + 1)^K, overflow-checked.
inline std::uint64_t dataset_size(const SystemConfig& cfg) {
  cfg.validate();
  const std::uint64_t r =
      static_cast<std::uint64_t>(cfg.servers) *
          static_cast<std::uint64_t>(detail::pow4(cfg.group) - 1) +
      1;
  std::uint64_t total = 1;
  for (unsigned k = 0; k < cfg.onn_inputs; ++k) {
    if (total > UINT64_MAX / r)
      throw OverflowError("dataset size overflows 64 bits");
    total *= r;
  }
  return total;
}

namespace detail {

// Per-channel numerator cardinalities of the achievable input grid
// (numerators over N). Differs from the closed formula only for channel 1
// when K does not divide M.
inline std::vector<std::uint64_t> grid_cardinalities(const SystemConfig& cfg) {
  std::vector<std::uint64_t> r(cfg.onn_inputs);
  for (unsigned k = 1; k <= cfg.onn_inputs; ++k)
    r[k - 1] = static_cast<std::uint64_t>(cfg.servers) *
                   static_cast<std::uint64_t>(channel_max(cfg, k)) +
               1;
  return r;
}

inline std::uint64_t grid_total(const SystemConfig& cfg) {
  std::uint64_t total = 1;
  for (std::uint64_t r : grid_cardinalities(cfg)) {
    if (total > UINT64_MAX / r) throw OverflowError("grid size overflows 64 bits");
    total *= r;
  }
  return total;
}

// Build the sample for a grid point given per-channel numerators (over N).
inline AggregationSample sample_from_grid(const SystemConfig& cfg,
                                          const std::vector<std::int64_t>& nums,
                                          bool keep_carry) {
  AggregationSample s;
  s.inputs.a.resize(cfg.onn_inputs);
  for (unsigned k = 0; k < cfg.onn_inputs; ++k)
    s.inputs.a[k] = Rat(nums[k], static_cast<std::int64_t>(cfg.servers));
  const Rat mean = grid_mean(s.inputs, cfg);
  const std::int64_t word = apply_quantizer(mean, cfg.quantizer);
  const Pam4Frame digits =
      encode_pam4(GradientWord{static_cast<std::uint64_t>(word)}, cfg);
  s.target_symbols.resize(cfg.segments);
  for (unsigned i = 0; i < cfg.segments; ++i)
    s.target_symbols[i] = Rat(digits.symbols[i]);
  if (keep_carry) {
    s.carry = mean - Rat(word);
    s.target_symbols[cfg.segments - 1] =
        s.target_symbols[cfg.segments - 1] + s.carry;
  }
  s.target_word = GradientWord{static_cast<std::uint64_t>(word)};
  return s;
}

}  // namespace detail

// Lexicographically smallest word tuple realizing a grid point. The target
// depends only on the grid value; this preimage pins a canonical witness.
inline std::vector<GradientWord> canonical_preimage(const PreprocessedVector& v,
                                                    const SystemConfig& cfg) {
  if (v.a.size() != cfg.onn_inputs) throw DomainError("grid point length != K");
  const unsigned n = cfg.servers;
  std::vector<std::int64_t> remaining(cfg.onn_inputs);
  for (unsigned k = 0; k < cfg.onn_inputs; ++k) {
    const Rat& r = v.a[k];
    if (static_cast<std::int64_t>(n) % r.den != 0)
      throw DomainError("grid value is not a multiple of 1/N");
    remaining[k] = r.num * (static_cast<std::int64_t>(n) / r.den);
  }
  std::vector<GradientWord> words(n);
  for (unsigned srv = 0; srv < n; ++srv) {
    std::uint64_t code = 0;
    const unsigned pad = detail::pad_symbols(cfg);
    for (unsigned k = 1; k <= cfg.onn_inputs; ++k) {
      const std::int64_t vmax = detail::channel_max(cfg, k);
      const std::int64_t left = static_cast<std::int64_t>(n - 1 - srv) * vmax;
      const std::int64_t take = std::max<std::int64_t>(0, remaining[k - 1] - left);
      remaining[k - 1] -= take;
      const unsigned bits = 2 * (k == 1 ? cfg.group - pad : cfg.group);
      code = (code << bits) | static_cast<std::uint64_t>(take);
    }
    words[srv] = GradientWord{code};
  }
  return words;
}

// Exhaustive mode enumerates every achievable grid point exactly once in a
// fixed order (channel 1 most significant); sampled mode draws grid points
// uniformly. Both are pure functions of (cfg, mode, seed).
inline AggregationDataset generate_dataset(const SystemConfig& cfg,
                                           DatasetMode mode, std::uint64_t seed,
                                           std::uint64_t max_size,
                                           std::uint64_t sample_count = 0,
                                           bool keep_carry = false) {
  cfg.validate();
  AggregationDataset ds;
  ds.cfg = cfg;
  ds.mode = mode;
  ds.seed = seed;
  ds.cascade_level = keep_carry ? 1 : 0;
  const auto card = detail::grid_cardinalities(cfg);
  if (mode == DatasetMode::exhaustive) {
    const std::uint64_t total = detail::grid_total(cfg);
    if (total > max_size)
      throw DomainError("exhaustive dataset of " + std::to_string(total) +
                        " samples exceeds max size " + std::to_string(max_size));
    ds.samples.reserve(total);
    std::vector<std::int64_t> nums(cfg.onn_inputs, 0);
    for (std::uint64_t idx = 0; idx < total; ++idx) {
      std::uint64_t rem = idx;
      for (unsigned k = cfg.onn_inputs; k-- > 0;) {
        nums[k] = static_cast<std::int64_t>(rem % card[k]);
        rem /= card[k];
      }
      ds.samples.push_back(detail::sample_from_grid(cfg, nums, keep_carry));
    }
  } else {
    Rng rng(seed);
    if (sample_count == 0) throw DomainError("sampled dataset needs a count");
    ds.samples.reserve(sample_count);
    std::vector<std::int64_t> nums(cfg.onn_inputs);
    for (std::uint64_t i = 0; i < sample_count; ++i) {
      for (unsigned k = 0; k < cfg.onn_inputs; ++k)
        nums[k] = static_cast<std::int64_t>(rng.bounded(card[k]));
      ds.samples.push_back(detail::sample_from_grid(cfg, nums, keep_carry));
    }
  }
  return ds;
}

namespace detail {

// Level-2 sample from the tuple of level-1 exact means (numerators over N).
inline AggregationSample level2_sample(const SystemConfig& cfg,
                                       const std::vector<std::int64_t>& mean_nums) {
  const std::int64_t n = cfg.servers;
  std::vector<std::vector<Rat>> frames(cfg.servers);
  std::int64_t global_num = 0;  // over N^2
  for (unsigned i = 0; i < cfg.servers; ++i) {
    const Rat mean(mean_nums[i], n);
    global_num += mean_nums[i];
    const std::int64_t word = mean.floor_int();  // level-1 Q is floor semantics
    const Rat frac = mean - Rat(word);
    const Pam4Frame digits =
        encode_pam4(GradientWord{static_cast<std::uint64_t>(word)}, cfg);
    frames[i].resize(cfg.segments);
    for (unsigned m = 0; m < cfg.segments; ++m) frames[i][m] = Rat(digits.symbols[m]);
    frames[i][cfg.segments - 1] = frames[i][cfg.segments - 1] + frac;
  }
  AggregationSample s;
  s.inputs = preprocess_symbols(frames, cfg);
  const Rat global(global_num, n * n);
  const std::int64_t word = apply_quantizer(global, cfg.quantizer);
  const Pam4Frame digits =
      encode_pam4(GradientWord{static_cast<std::uint64_t>(word)}, cfg);
  s.target_symbols.resize(cfg.segments);
  for (unsigned m = 0; m < cfg.segments; ++m) s.target_symbols[m] = Rat(digits.symbols[m]);
  s.target_word = GradientWord{static_cast<std::uint64_t>(word)};
  s.carry = Rat(0);
  return s;
}

}  // namespace detail

// Datasets for the two-level cascade. Level 1 keeps the discarded decimal
// part on its last output symbol; level 2 consumes the carry-extended frames
// and targets Q of the global mean, so the trained composition reproduces
// the single-level quantized average exactly.
inline std::pair<AggregationDataset, AggregationDataset> generate_cascade_datasets(
    const SystemConfig& cfg, DatasetMode mode, std::uint64_t seed,
    std::uint64_t max_size, std::uint64_t sample_count = 0) {
  cfg.validate();
  if (cfg.servers < 2) throw DomainError("cascade needs fan-in >= 2");
  AggregationDataset level1 =
      generate_dataset(cfg, mode, seed, max_size, sample_count, /*keep_carry=*/true);

  AggregationDataset level2;
  level2.cfg = cfg;
  level2.mode = mode;
  level2.seed = seed;
  level2.cascade_level = 2;
  // Each level-1 unit's output is fully described by its exact mean, a
  // multiple of 1/N in [0, 2^B - 1].
  const std::uint64_t mean_states =
      static_cast<std::uint64_t>(cfg.servers) * cfg.max_code() + 1;
  if (mode == DatasetMode::exhaustive) {
    std::uint64_t total = 1;
    for (unsigned i = 0; i < cfg.servers; ++i) {
      if (total > max_size / mean_states + 1)
        throw DomainError("exhaustive level-2 enumeration of " +
                          std::to_string(mean_states) + "^" +
                          std::to_string(cfg.servers) + " tuples exceeds max size " +
                          std::to_string(max_size));
      total *= mean_states;
    }
    if (total > max_size)
      throw DomainError("exhaustive level-2 dataset of " + std::to_string(total) +
                        " tuples exceeds max size " + std::to_string(max_size));
    std::map<std::vector<std::int64_t>, bool> seen;
    std::vector<std::int64_t> tuple(cfg.servers, 0);
    for (std::uint64_t idx = 0; idx < total; ++idx) {
      std::uint64_t rem = idx;
      for (unsigned i = cfg.servers; i-- > 0;) {
        tuple[i] = static_cast<std::int64_t>(rem % mean_states);
        rem /= mean_states;
      }
      AggregationSample s = detail::level2_sample(cfg, tuple);
      std::vector<std::int64_t> key(cfg.onn_inputs);
      const std::int64_t n2 = static_cast<std::int64_t>(cfg.servers) *
                              static_cast<std::int64_t>(cfg.servers);
      for (unsigned k = 0; k < cfg.onn_inputs; ++k)
        key[k] = s.inputs.a[k].num * (n2 / s.inputs.a[k].den);
      if (seen.emplace(std::move(key), true).second)
        level2.samples.push_back(std::move(s));
    }
  } else {
    if (sample_count == 0) throw DomainError("sampled dataset needs a count");
    Rng rng(seed + 1);  // distinct stream from level 1
    std::vector<std::int64_t> tuple(cfg.servers);
    for (std::uint64_t i = 0; i < sample_count; ++i) {
      for (unsigned s = 0; s < cfg.servers; ++s)
        tuple[s] = static_cast<std::int64_t>(rng.bounded(mean_states));
      level2.samples.push_back(detail::level2_sample(cfg, tuple));
    }
  }
  return {std::move(level1), std::move(level2)};
}

}  // namespace optinc
