#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "optinc/io_util.hpp"
#include "optinc/oracle.hpp"

namespace optinc {

// Binary dataset layout (little-endian):
//   magic "OPTINC1" (7 bytes)
//   u32 B, u32 N, u32 M, u32 K, u32 g, u8 quantizer, u8 mode, u64 seed, u64 count
// then per record:
//   K x (i64 num, i64 den)  inputs
//   M x (i64 num, i64 den)  target symbols
//   u64 target_word
//   (i64 num, i64 den)      carry
inline constexpr char kDatasetMagic[] = "OPTINC1";

inline void save_dataset(const std::filesystem::path& path,
                         const AggregationDataset& ds) {
  atomic_write(path, [&](std::ostream& os) {
    BinWriter w(os);
    w.magic(kDatasetMagic, 7);
    w.u32(ds.cfg.bit_width);
    w.u32(ds.cfg.servers);
    w.u32(ds.cfg.segments);
    w.u32(ds.cfg.onn_inputs);
    w.u32(ds.cfg.group);
    w.u8(static_cast<std::uint8_t>(ds.cfg.quantizer));
    w.u8(static_cast<std::uint8_t>(ds.mode));
    w.u64(ds.seed);
    w.u64(ds.samples.size());
    for (const AggregationSample& s : ds.samples) {
      for (const Rat& r : s.inputs.a) {
        w.i64(r.num);
        w.i64(r.den);
      }
      for (const Rat& r : s.target_symbols) {
        w.i64(r.num);
        w.i64(r.den);
      }
      w.u64(s.target_word.code);
      w.i64(s.carry.num);
      w.i64(s.carry.den);
    }
  });
}

inline AggregationDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset file " + path.string());
  BinReader r(is);
  r.expect_magic(kDatasetMagic, 7, "dataset");
  AggregationDataset ds;
  ds.cfg.bit_width = r.u32();
  ds.cfg.servers = r.u32();
  ds.cfg.segments = r.u32();
  ds.cfg.onn_inputs = r.u32();
  ds.cfg.group = r.u32();
  ds.cfg.quantizer = static_cast<Quantizer>(r.u8());
  ds.mode = static_cast<DatasetMode>(r.u8());
  ds.seed = r.u64();
  ds.cfg.validate();
  const std::uint64_t count = r.u64();
  ds.samples.resize(count);
  bool any_carry = false;
  for (auto& s : ds.samples) {
    s.inputs.a.resize(ds.cfg.onn_inputs);
    for (auto& v : s.inputs.a) {
      const std::int64_t num = r.i64();
      v = Rat(num, r.i64());
    }
    s.target_symbols.resize(ds.cfg.segments);
    for (auto& v : s.target_symbols) {
      const std::int64_t num = r.i64();
      v = Rat(num, r.i64());
    }
    s.target_word = GradientWord{r.u64()};
    const std::int64_t cn = r.i64();
    s.carry = Rat(cn, r.i64());
    any_carry = any_carry || !s.carry.is_zero();
  }
  // in-memory hint only; level 2 is recognizable by input denominators > N
  for (const auto& s : ds.samples)
    for (const auto& v : s.inputs.a)
      if (v.den > static_cast<std::int64_t>(ds.cfg.servers)) ds.cascade_level = 2;
  if (ds.cascade_level == 0 && any_carry) ds.cascade_level = 1;
  return ds;
}

// Plain-text companion with the same columns, for inspection.
inline void export_dataset_csv(const std::filesystem::path& path,
                               const AggregationDataset& ds) {
  atomic_write(path, [&](std::ostream& os) {
    for (unsigned k = 1; k <= ds.cfg.onn_inputs; ++k) os << "input_" << k << ",";
    for (unsigned m = 1; m <= ds.cfg.segments; ++m) os << "target_symbol_" << m << ",";
    os << "target_word,carry\n";
    for (const AggregationSample& s : ds.samples) {
      for (const Rat& r : s.inputs.a) os << r.str() << ",";
      for (const Rat& r : s.target_symbols) os << r.str() << ",";
      os << s.target_word.code << "," << s.carry.str() << "\n";
    }
  });
}

}  // namespace optinc
