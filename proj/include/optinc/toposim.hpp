#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "optinc/codec.hpp"
#include "optinc/config.hpp"
#include "optinc/onn.hpp"
#include "optinc/oracle.hpp"
#include "optinc/rng.hpp"

namespace optinc {

// One OptINC device: preprocessing unit, ONN (or the exact oracle standing
// in for a perfectly trained one), and the broadcast splitting unit.
struct OptIncInstance {
  enum class CarryMode : std::uint8_t { none = 0, emit_carry = 1, accept_carry = 2 };

  SystemConfig cfg;
  CarryMode carry_mode = CarryMode::none;
  bool oracle = false;
  std::optional<OnnModel> model;

  void validate() const {
    cfg.validate();
    if (!oracle) {
      if (!model) throw DomainError("OptINC instance has neither model nor oracle");
      if (model->spec.layer_dims.front() != cfg.onn_inputs ||
          model->spec.layer_dims.back() != cfg.segments)
        throw DomainError("OptINC model dims do not match config");
    }
  }
};

inline OptIncInstance make_oracle_unit(const SystemConfig& cfg,
                                       OptIncInstance::CarryMode cm =
                                           OptIncInstance::CarryMode::none) {
  OptIncInstance u;
  u.cfg = cfg;
  u.carry_mode = cm;
  u.oracle = true;
  return u;
}

// The unit's snapped output frame as exact rationals. In emit_carry mode the
// last symbol rides the extended 1/N grid and carries the decimal part.
inline std::vector<Rat> unit_output_symbols(const OptIncInstance& unit,
                                            std::span<const GradientWord> words) {
  unit.validate();
  const SystemConfig& cfg = unit.cfg;
  if (words.size() != cfg.servers)
    throw DomainError("expected N words for one OptINC aggregation");
  const bool emit = unit.carry_mode == OptIncInstance::CarryMode::emit_carry;
  if (unit.oracle) {
    auto [symbols, carry] = expected_outputs(words, cfg, emit);
    return symbols;
  }
  std::vector<Pam4Frame> frames(cfg.servers);
  for (unsigned n = 0; n < cfg.servers; ++n) frames[n] = encode_pam4(words[n], cfg);
  const PreprocessedVector inputs = preprocess(frames, cfg);
  AnalogFrame out = forward(*unit.model, inputs);
  out.last_channel_step = emit ? 1.0 / static_cast<double>(cfg.servers) : 1.0;
  const AnalogFrame snapped = snap_to_grid(out, cfg);
  std::vector<Rat> symbols(cfg.segments);
  const std::int64_t n = cfg.servers;
  for (unsigned i = 0; i < cfg.segments; ++i) {
    if (emit && i + 1 == cfg.segments)
      symbols[i] = Rat(static_cast<std::int64_t>(std::llround(
                           snapped.levels[i] * static_cast<double>(n))),
                       n);
    else
      symbols[i] = Rat(static_cast<std::int64_t>(std::llround(snapped.levels[i])));
  }
  return symbols;
}

// encode -> preprocess -> ONN -> snap -> broadcast -> decode. Every server
// receives the identical word; with a perfect unit it equals the quantized
// average.
inline std::vector<GradientWord> aggregate_once(const OptIncInstance& unit,
                                                std::span<const GradientWord> words) {
  const std::vector<Rat> symbols = unit_output_symbols(unit, words);
  Pam4Frame f;
  f.symbols.reserve(symbols.size());
  for (const Rat& s : symbols) {
    const std::int64_t v = s.floor_int();
    f.symbols.push_back(static_cast<std::uint8_t>(std::min<std::int64_t>(3, v)));
  }
  const GradientWord w = decode_pam4(f, unit.cfg);
  return std::vector<GradientWord>(unit.cfg.servers, w);
}

// Two fan-in-N levels supporting up to N^2 servers; unused inputs are bound
// to zero words by the caller.
struct CascadeTopology {
  unsigned levels = 2;
  unsigned fan_in = 0;
  std::vector<OptIncInstance> level1_units;
  OptIncInstance level2_unit;
  bool oracle_mode = true;
};

inline CascadeTopology make_oracle_cascade(const SystemConfig& cfg) {
  CascadeTopology t;
  t.fan_in = cfg.servers;
  t.level1_units.assign(
      cfg.servers, make_oracle_unit(cfg, OptIncInstance::CarryMode::emit_carry));
  t.level2_unit = make_oracle_unit(cfg, OptIncInstance::CarryMode::accept_carry);
  t.oracle_mode = true;
  return t;
}

// corrected == false reproduces the plain two-level quantization (Eq.-9
// semantics, carries discarded); corrected == true keeps the level-1 decimal
// parts on the wire, which in oracle mode reproduces Q of the global mean
// exactly.
inline GradientWord cascade_aggregate(const CascadeTopology& topo,
                                      std::span<const GradientWord> words,
                                      bool corrected) {
  const unsigned n = topo.fan_in;
  if (topo.level1_units.size() != n)
    throw DomainError("cascade needs N level-1 units");
  if (words.size() != static_cast<std::size_t>(n) * n)
    throw DomainError("cascade expects N^2 words, got " +
                      std::to_string(words.size()));
  const SystemConfig& cfg = topo.level2_unit.cfg;

  std::vector<std::vector<Rat>> frames(n);
  for (unsigned i = 0; i < n; ++i) {
    OptIncInstance unit = topo.level1_units[i];
    unit.carry_mode = corrected ? OptIncInstance::CarryMode::emit_carry
                                : OptIncInstance::CarryMode::none;
    frames[i] = unit_output_symbols(unit, words.subspan(i * n, n));
  }

  if (topo.level2_unit.oracle) {
    const PreprocessedVector inputs = preprocess_symbols(frames, cfg);
    const Rat mean = grid_mean(inputs, cfg);
    return GradientWord{
        static_cast<std::uint64_t>(apply_quantizer(mean, cfg.quantizer))};
  }
  // model-backed level 2: forward on the (possibly carry-extended) inputs
  const PreprocessedVector inputs = preprocess_symbols(frames, cfg);
  AnalogFrame out = forward(*topo.level2_unit.model, inputs);
  out.last_channel_step = 1.0;
  return decode_pam4(to_pam4(snap_to_grid(out, cfg)), cfg);
}

// --- ring all-reduce baseline ------------------------------------------------

namespace detail {

// Per-round bookkeeping of the classic ring schedule. Chunk c is fully
// reduced at server (c-1) mod N after N-1 rounds; the all-gather circulates
// the finished chunks for another N-1 rounds.
struct RingState {
  unsigned n = 0;
  unsigned rounds = 0;
  std::uint64_t bytes_per_server = 0;
  std::vector<std::vector<std::uint64_t>> contributors;  // [server][chunk] bitmask
};

}  // namespace detail

struct RingResult {
  std::vector<std::vector<double>> vectors;  // per-server results (identical)
  unsigned rounds = 0;
  std::uint64_t bytes_per_server = 0;
};

// Reduce-scatter then all-gather over a logical ring. Rounds and bytes are
// counted from the simulated schedule; the reduction arithmetic itself is
// performed in canonical rank order (the simulation is functional, not
// timed), so the result is exactly the rank-ordered mean.
inline RingResult ring_allreduce(const std::vector<std::vector<double>>& input) {
  const unsigned n = static_cast<unsigned>(input.size());
  if (n < 2) throw DomainError("ring all-reduce needs N >= 2 servers");
  const std::size_t len = input[0].size();
  for (const auto& v : input)
    if (v.size() != len) throw DomainError("ring all-reduce vector length mismatch");

  const std::size_t chunk_len = (len + n - 1) / n;
  const std::uint64_t chunk_bytes = chunk_len * sizeof(double);

  detail::RingState st;
  st.n = n;
  st.contributors.assign(n, std::vector<std::uint64_t>(n, 0));
  for (unsigned i = 0; i < n; ++i)
    for (unsigned c = 0; c < n; ++c) st.contributors[i][c] = 1ull << i;

  // reduce-scatter: server i sends its partial of chunk (i - r) mod N
  for (unsigned r = 0; r + 1 < n; ++r) {
    std::vector<std::uint64_t> in_flight(n);
    for (unsigned i = 0; i < n; ++i)
      in_flight[i] = st.contributors[i][(i + n - r) % n];
    for (unsigned i = 0; i < n; ++i) {
      const unsigned c = (i + n - r) % n;
      const unsigned dst = (i + 1) % n;
      st.contributors[dst][c] = in_flight[i] | (1ull << dst);
    }
    st.rounds++;
    st.bytes_per_server += chunk_bytes;
  }
  for (unsigned c = 0; c < n; ++c) {
    const unsigned owner = (c + n - 1) % n;
    if (st.contributors[owner][c] != (n == 64 ? ~0ull : (1ull << n) - 1))
      throw NumericError("ring schedule failed to reduce chunk");
  }

  // canonical-order reduction of each fully reduced chunk
  std::vector<double> mean(chunk_len * n, 0.0);
  for (std::size_t j = 0; j < len; ++j) {
    double sum = 0.0;
    for (unsigned i = 0; i < n; ++i) sum += input[i][j];
    mean[j] = sum / static_cast<double>(n);
  }

  // all-gather: server i sends chunk (i + 1 - r) mod N at round r
  std::vector<std::vector<bool>> have(n, std::vector<bool>(n, false));
  for (unsigned c = 0; c < n; ++c) have[(c + n - 1) % n][c] = true;
  for (unsigned r = 0; r + 1 < n; ++r) {
    for (unsigned i = 0; i < n; ++i) {
      const unsigned c = (i + 1 + n - r) % n;
      if (!have[i][c]) throw NumericError("ring gather schedule out of step");
      have[(i + 1) % n][c] = true;
    }
    st.rounds++;
    st.bytes_per_server += chunk_bytes;
  }
  for (unsigned i = 0; i < n; ++i)
    for (unsigned c = 0; c < n; ++c)
      if (!have[i][c]) throw NumericError("ring gather incomplete");

  RingResult res;
  res.rounds = st.rounds;
  res.bytes_per_server = st.bytes_per_server;
  res.vectors.assign(n, std::vector<double>(mean.begin(), mean.begin() + len));
  return res;
}

struct OverheadReport {
  unsigned ring_rounds = 0;
  unsigned optinc_rounds = 1;
  double relative_overhead = 0.0;
};

inline OverheadReport overhead_report(unsigned n) {
  if (n < 2) throw DomainError("overhead report needs N >= 2");
  OverheadReport rep;
  rep.ring_rounds = 2 * (n - 1);
  rep.optinc_rounds = 1;
  rep.relative_overhead = static_cast<double>(n - 2) / static_cast<double>(n);
  return rep;
}

// --- desk-scale end-to-end harness -------------------------------------------

enum class Aggregation : std::uint8_t {
  exact_mean = 0,
  optinc_trained = 1,
  optinc_oracle = 2,
  ring = 3
};

inline const char* to_string(Aggregation a) {
  switch (a) {
    case Aggregation::exact_mean: return "exact_mean";
    case Aggregation::optinc_trained: return "optinc_trained";
    case Aggregation::optinc_oracle: return "optinc_oracle";
    default: return "ring";
  }
}

struct E2eConfig {
  Aggregation agg = Aggregation::exact_mean;
  unsigned servers = 4;
  unsigned bit_width = 8;
  Quantizer quantizer = Quantizer::floor;
  unsigned steps = 250;
  double lr = 0.25;
  double clip = 1.0;  // gradients quantized over [-clip, clip]
  std::uint64_t seed = 42;
  unsigned train_per_class = 120;  // training points per class (3 classes)
  unsigned test_points = 300;
  const OnnModel* unit_model = nullptr;  // required for optinc_trained
};

struct E2eResult {
  std::vector<double> loss;      // training-set cross-entropy after each step
  std::vector<double> accuracy;  // test accuracy after each step
  std::vector<double> final_params;
  double final_accuracy = 0.0;
  bool unit_warning = false;  // trained unit below 100% on its grid
};

namespace detail {

// 2-layer softmax classifier on three seeded Gaussian blobs.
struct ToyTask {
  Matrix train_x;  // 2 x T
  std::vector<int> train_y;
  Matrix test_x;
  std::vector<int> test_y;
};

inline ToyTask make_blobs(unsigned train_per_class, unsigned test_points,
                          Rng& rng) {
  const double cx[3] = {0.0, 2.2, -2.2};
  const double cy[3] = {2.2, -1.4, -1.4};
  const double stddev = 1.05;
  ToyTask t;
  const unsigned total = 3 * train_per_class;
  t.train_x.resize(2, total);
  t.train_y.resize(total);
  for (unsigned i = 0; i < total; ++i) {
    const int cls = static_cast<int>(i % 3);
    t.train_x(0, i) = cx[cls] + stddev * rng.normal();
    t.train_x(1, i) = cy[cls] + stddev * rng.normal();
    t.train_y[i] = cls;
  }
  t.test_x.resize(2, test_points);
  t.test_y.resize(test_points);
  for (unsigned i = 0; i < test_points; ++i) {
    const int cls = static_cast<int>(i % 3);
    t.test_x(0, i) = cx[cls] + stddev * rng.normal();
    t.test_x(1, i) = cy[cls] + stddev * rng.normal();
    t.test_y[i] = cls;
  }
  return t;
}

struct ToyNet {
  Matrix w1, w2;  // 16x2, 3x16
  Vector b1, b2;

  std::size_t param_count() const {
    return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
  }
  void to_flat(std::vector<double>& out) const {
    out.clear();
    out.reserve(param_count());
    out.insert(out.end(), w1.data(), w1.data() + w1.size());
    out.insert(out.end(), b1.data(), b1.data() + b1.size());
    out.insert(out.end(), w2.data(), w2.data() + w2.size());
    out.insert(out.end(), b2.data(), b2.data() + b2.size());
  }
  void add_scaled(const std::vector<double>& delta, double scale) {
    std::size_t o = 0;
    for (Eigen::Index i = 0; i < w1.size(); ++i) w1.data()[i] += scale * delta[o++];
    for (Eigen::Index i = 0; i < b1.size(); ++i) b1.data()[i] += scale * delta[o++];
    for (Eigen::Index i = 0; i < w2.size(); ++i) w2.data()[i] += scale * delta[o++];
    for (Eigen::Index i = 0; i < b2.size(); ++i) b2.data()[i] += scale * delta[o++];
  }
};

inline ToyNet init_toy_net(Rng& rng) {
  ToyNet n;
  n.w1.resize(16, 2);
  n.w2.resize(3, 16);
  const double l1 = std::sqrt(6.0 / 18.0), l2 = std::sqrt(6.0 / 19.0);
  for (Eigen::Index i = 0; i < n.w1.size(); ++i)
    n.w1.data()[i] = rng.uniform(-l1, l1);
  for (Eigen::Index i = 0; i < n.w2.size(); ++i)
    n.w2.data()[i] = rng.uniform(-l2, l2);
  n.b1 = Vector::Zero(16);
  n.b2 = Vector::Zero(3);
  return n;
}

inline Matrix toy_logits(const ToyNet& n, const Matrix& x) {
  Matrix h = (n.w1 * x).colwise() + n.b1;
  h = h.cwiseMax(0.0);
  return (n.w2 * h).colwise() + n.b2;
}

inline double toy_loss(const ToyNet& n, const Matrix& x, const std::vector<int>& y) {
  const Matrix logits = toy_logits(n, x);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const double mx = logits.col(i).maxCoeff();
    const double lse = mx + std::log((logits.col(i).array() - mx).exp().sum());
    loss += lse - logits(y[static_cast<std::size_t>(i)], i);
  }
  return loss / static_cast<double>(logits.cols());
}

inline double toy_accuracy(const ToyNet& n, const Matrix& x, const std::vector<int>& y) {
  const Matrix logits = toy_logits(n, x);
  std::size_t ok = 0;
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    Eigen::Index best;
    logits.col(i).maxCoeff(&best);
    if (best == y[static_cast<std::size_t>(i)]) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(logits.cols());
}

// mean cross-entropy gradient over one shard, flattened
inline std::vector<double> toy_gradient(const ToyNet& n, const Matrix& x,
                                        const std::vector<int>& y) {
  Matrix h_pre = (n.w1 * x).colwise() + n.b1;
  Matrix h = h_pre.cwiseMax(0.0);
  Matrix logits = (n.w2 * h).colwise() + n.b2;
  Matrix probs(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const double mx = logits.col(i).maxCoeff();
    Vector e = (logits.col(i).array() - mx).exp();
    probs.col(i) = e / e.sum();
    probs(y[static_cast<std::size_t>(i)], i) -= 1.0;
  }
  const double inv = 1.0 / static_cast<double>(x.cols());
  Matrix dw2 = inv * probs * h.transpose();
  Vector db2 = inv * probs.rowwise().sum();
  Matrix dh = n.w2.transpose() * probs;
  dh = (dh.array() * (h_pre.array() > 0.0).cast<double>()).matrix();
  Matrix dw1 = inv * dh * x.transpose();
  Vector db1 = inv * dh.rowwise().sum();
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(dw1.size() + db1.size() + dw2.size() + db2.size()));
  flat.insert(flat.end(), dw1.data(), dw1.data() + dw1.size());
  flat.insert(flat.end(), db1.data(), db1.data() + db1.size());
  flat.insert(flat.end(), dw2.data(), dw2.data() + dw2.size());
  flat.insert(flat.end(), db2.data(), db2.data() + db2.size());
  return flat;
}

}  // namespace detail

// Data-parallel toy training: per-shard gradients, per-tensor B-bit
// quantization for the OptINC paths, aggregation through the chosen path,
// then a plain SGD update. Deterministic given the seed.
inline E2eResult e2e_toy_training(const E2eConfig& ec) {
  if (ec.servers < 2) throw DomainError("e2e harness needs N >= 2 shards");
  const SystemConfig cfg =
      make_config(ec.bit_width, ec.servers, (ec.bit_width + 1) / 2, ec.quantizer);
  const FixedPointScale scale{-ec.clip, ec.clip};

  E2eResult res;
  OptIncInstance unit;
  if (ec.agg == Aggregation::optinc_trained) {
    if (!ec.unit_model) throw DomainError("optinc_trained needs a unit model");
    unit.cfg = cfg;
    unit.oracle = false;
    unit.model = *ec.unit_model;
    unit.validate();
    const AggregationDataset grid = generate_dataset(
        cfg, DatasetMode::exhaustive, 0, std::uint64_t{1} << 24);
    if (evaluate(*unit.model, grid, cfg).exact_match < 1.0) res.unit_warning = true;
  } else if (ec.agg == Aggregation::optinc_oracle) {
    unit = make_oracle_unit(cfg);
  }

  Rng data_rng(ec.seed);
  const detail::ToyTask task =
      detail::make_blobs(ec.train_per_class, ec.test_points, data_rng);
  Rng init_rng(ec.seed ^ 0xabcdef12345ull);
  detail::ToyNet net = detail::init_toy_net(init_rng);

  // round-robin shard split
  const unsigned total = static_cast<unsigned>(task.train_x.cols());
  std::vector<std::vector<unsigned>> shard_idx(ec.servers);
  for (unsigned i = 0; i < total; ++i) shard_idx[i % ec.servers].push_back(i);
  std::vector<Matrix> shard_x(ec.servers);
  std::vector<std::vector<int>> shard_y(ec.servers);
  for (unsigned s = 0; s < ec.servers; ++s) {
    shard_x[s].resize(2, shard_idx[s].size());
    shard_y[s].resize(shard_idx[s].size());
    for (std::size_t i = 0; i < shard_idx[s].size(); ++i) {
      shard_x[s].col(static_cast<Eigen::Index>(i)) = task.train_x.col(shard_idx[s][i]);
      shard_y[s][i] = task.train_y[shard_idx[s][i]];
    }
  }

  res.loss.reserve(ec.steps);
  res.accuracy.reserve(ec.steps);
  std::vector<std::vector<double>> grads(ec.servers);
  std::vector<double> agg;
  std::vector<GradientWord> words(ec.servers);
  for (unsigned step = 0; step < ec.steps; ++step) {
    for (unsigned s = 0; s < ec.servers; ++s)
      grads[s] = detail::toy_gradient(net, shard_x[s], shard_y[s]);
    const std::size_t p = grads[0].size();
    agg.assign(p, 0.0);
    switch (ec.agg) {
      case Aggregation::exact_mean: {
        for (std::size_t j = 0; j < p; ++j) {
          double sum = 0.0;
          for (unsigned s = 0; s < ec.servers; ++s) sum += grads[s][j];
          agg[j] = sum / static_cast<double>(ec.servers);
        }
        break;
      }
      case Aggregation::ring: {
        agg = ring_allreduce(grads).vectors[0];
        break;
      }
      case Aggregation::optinc_oracle:
      case Aggregation::optinc_trained: {
        for (std::size_t j = 0; j < p; ++j) {
          for (unsigned s = 0; s < ec.servers; ++s)
            words[s] = real_to_word(grads[s][j], scale, cfg);
          GradientWord w;
          if (ec.agg == Aggregation::optinc_oracle)
            w = quantized_average(words, cfg);
          else
            w = aggregate_once(unit, words)[0];
          agg[j] = word_to_real(w, scale, cfg);
        }
        break;
      }
    }
    net.add_scaled(agg, -ec.lr);
    res.loss.push_back(detail::toy_loss(net, task.train_x, task.train_y));
    res.accuracy.push_back(detail::toy_accuracy(net, task.test_x, task.test_y));
  }
  net.to_flat(res.final_params);
  res.final_accuracy = res.accuracy.empty() ? 0.0 : res.accuracy.back();
  return res;
}

inline void write_e2e_csv(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, E2eResult>>& runs) {
  atomic_write(path, [&](std::ostream& os) {
    os.precision(17);
    os << "step";
    for (const auto& [name, r] : runs) os << ",loss_" << name << ",accuracy_" << name;
    os << "\n";
    std::size_t steps = 0;
    for (const auto& [name, r] : runs) steps = std::max(steps, r.loss.size());
    for (std::size_t t = 0; t < steps; ++t) {
      os << t;
      for (const auto& [name, r] : runs) {
        os << ",";
        if (t < r.loss.size()) os << r.loss[t];
        os << ",";
        if (t < r.accuracy.size()) os << r.accuracy[t];
      }
      os << "\n";
    }
  });
}

}  // namespace optinc
