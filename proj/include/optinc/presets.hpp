#pragma once

#include <set>
#include <string>
#include <vector>

#include "optinc/config.hpp"
#include "optinc/onn.hpp"

namespace optinc {

// The four experiment configurations: bit width, server count, ONN
// structure, and the approximated-layer set (1-based weight layers).
struct Table1Preset {
  std::string name;
  unsigned bit_width;
  unsigned servers;
  unsigned onn_inputs;
  std::vector<unsigned> layer_dims;
  std::set<unsigned> approx_layers;
  double reference_area_ratio;  // percent
};

inline const std::vector<Table1Preset>& table1_presets() {
  static const std::vector<Table1Preset> rows = {
      {"table1-row1", 8, 4, 4, {4, 64, 128, 256, 128, 64, 4},
       {1, 2, 3, 4, 5, 6}, 39.3},
      {"table1-row2", 8, 8, 4, {4, 64, 128, 256, 512, 256, 128, 64, 4},
       {2, 3, 4, 5, 6, 7}, 40.9},
      {"table1-row3", 8, 16, 4,
       {4, 64, 128, 256, 512, 1024, 512, 256, 128, 64, 4},
       {2, 3, 4, 5, 6, 7, 8, 9}, 40.4},
      {"table1-row4", 16, 4, 4, {4, 64, 128, 256, 512, 256, 128, 64, 8},
       {4, 5, 6}, 49.3},
  };
  return rows;
}

inline const Table1Preset& find_preset(const std::string& name) {
  for (const Table1Preset& p : table1_presets())
    if (p.name == name) return p;
  throw DomainError("unknown preset '" + name +
                    "' (expected table1-row1..table1-row4)");
}

inline SystemConfig preset_config(const Table1Preset& p,
                                  Quantizer q = Quantizer::floor) {
  return make_config(p.bit_width, p.servers, p.onn_inputs, q);
}

inline OnnSpec preset_spec(const Table1Preset& p, Activation act = Activation::relu,
                           bool approximated = true) {
  const SystemConfig cfg = preset_config(p);
  return make_onn_spec(cfg, p.layer_dims, act,
                       approximated ? p.approx_layers : std::set<unsigned>{});
}

}  // namespace optinc
