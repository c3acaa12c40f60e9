// optinc: desk-scale simulator of optical in-network gradient aggregation.
//
// Subcommands: gen-dataset, train, eval, cost, decompose, cascade-sim,
// rounds, e2e. Every command is reproducible: config + seed fully determine
// all output artifacts. Exit codes: 0 ok, 2 config, 3 numeric, 4 I/O.

#include <CLI11.hpp>
#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "optinc/dataset_io.hpp"
#include "optinc/onn.hpp"
#include "optinc/oracle.hpp"
#include "optinc/photonic.hpp"
#include "optinc/presets.hpp"
#include "optinc/toposim.hpp"
#include "optinc/trainer.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace optinc;

namespace {

struct GlobalOpts {
  std::string config_path;
  fs::path out_dir = ".";
  std::uint64_t seed = 1;
  std::uint64_t max_size = std::uint64_t{1} << 24;
  unsigned threads = 1;
  json config;  // parsed --config contents (or empty object)
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path);
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw DomainError(std::string("config parse error: ") + e.what());
  }
  return j;
}

// config lookup helpers: CLI flags override config fields
template <typename T>
void from_config(const json& j, const char* section, const char* key, T& out,
                 bool flag_given) {
  if (flag_given) return;
  if (j.contains(section) && j[section].contains(key))
    out = j[section][key].get<T>();
}

Quantizer parse_quantizer(const std::string& s) {
  if (s == "floor") return Quantizer::floor;
  if (s == "nearest" || s == "nearest-half-up") return Quantizer::nearest_half_up;
  throw DomainError("unknown quantizer '" + s + "' (floor | nearest)");
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "gelu") return Activation::gelu;
  if (s == "tanh") return Activation::tanh;
  throw DomainError("unknown activation '" + s + "'");
}

std::vector<unsigned> parse_uint_list(const std::string& s) {
  std::vector<unsigned> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(static_cast<unsigned>(std::stoul(tok)));
  return out;
}

std::set<unsigned> parse_approx(const std::string& s, unsigned num_layers) {
  if (s == "none" || s.empty()) return {};
  if (s == "all") {
    std::set<unsigned> all;
    for (unsigned l = 1; l <= num_layers; ++l) all.insert(l);
    return all;
  }
  const auto v = parse_uint_list(s);
  return std::set<unsigned>(v.begin(), v.end());
}

struct OnnOpts {
  std::string preset;
  std::string layers;      // "4,64,4"
  std::string approx = "none";
  std::string activation = "relu";
  bool no_bias = false;
};

struct SystemOpts {
  unsigned bit_width = 8;
  unsigned servers = 4;
  unsigned onn_inputs = 0;  // 0 -> K = M
  std::string quantizer = "floor";
};

SystemConfig resolve_system(const GlobalOpts& g, SystemOpts& so,
                            bool b_given, bool n_given, bool k_given,
                            bool q_given) {
  from_config(g.config, "system", "bit_width", so.bit_width, b_given);
  from_config(g.config, "system", "servers", so.servers, n_given);
  from_config(g.config, "system", "onn_inputs", so.onn_inputs, k_given);
  from_config(g.config, "system", "quantizer", so.quantizer, q_given);
  const unsigned m = (so.bit_width + 1) / 2;
  const unsigned k = so.onn_inputs == 0 ? m : so.onn_inputs;
  return make_config(so.bit_width, so.servers, k, parse_quantizer(so.quantizer));
}

OnnSpec resolve_spec(const GlobalOpts& g, const SystemConfig& cfg, OnnOpts& oo) {
  if (!oo.preset.empty()) {
    const Table1Preset& p = find_preset(oo.preset);
    return make_onn_spec(cfg, p.layer_dims, parse_activation(oo.activation),
                         oo.approx == "none" ? p.approx_layers
                                             : parse_approx(oo.approx,
                                                            static_cast<unsigned>(
                                                                p.layer_dims.size() - 1)),
                         !oo.no_bias);
  }
  std::vector<unsigned> dims;
  if (!oo.layers.empty())
    dims = parse_uint_list(oo.layers);
  else if (g.config.contains("onn") && g.config["onn"].contains("layer_dims"))
    dims = g.config["onn"]["layer_dims"].get<std::vector<unsigned>>();
  else
    throw DomainError("no ONN structure given (--preset, --layers or config)");
  std::string act = oo.activation, approx = oo.approx;
  bool use_bias = !oo.no_bias;
  if (g.config.contains("onn")) {
    const json& o = g.config["onn"];
    if (oo.activation == "relu" && o.contains("activation"))
      act = o["activation"].get<std::string>();
    if (o.contains("use_bias") && !oo.no_bias) use_bias = o["use_bias"].get<bool>();
    if (oo.approx == "none" && o.contains("approx_layers")) {
      const auto v = o["approx_layers"].get<std::vector<unsigned>>();
      std::string s;
      for (unsigned x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
      approx = s.empty() ? "none" : s;
    }
  }
  return make_onn_spec(cfg, dims, parse_activation(act),
                       parse_approx(approx, static_cast<unsigned>(dims.size() - 1)),
                       use_bias);
}

TrainConfig resolve_train(const GlobalOpts& g, const SystemConfig& cfg,
                          TrainConfig tc) {
  if (g.config.contains("train")) {
    const json& t = g.config["train"];
    // config fills anything the caller left at the marker defaults
    if (t.contains("epochs")) tc.epochs = t["epochs"].get<unsigned>();
    if (t.contains("stage_switch")) tc.stage_switch = t["stage_switch"].get<unsigned>();
    if (t.contains("projection_period"))
      tc.projection_period = t["projection_period"].get<unsigned>();
    if (t.contains("lr_initial")) tc.lr_initial = t["lr_initial"].get<double>();
    if (t.contains("lr_decay")) tc.lr_decay = t["lr_decay"].get<double>();
    if (t.contains("batch_size")) tc.batch_size = t["batch_size"].get<unsigned>();
    if (t.contains("seed")) tc.seed = t["seed"].get<std::uint64_t>();
    if (t.contains("ste_enabled")) tc.ste_enabled = t["ste_enabled"].get<bool>();
    if (t.contains("bit_weights"))
      tc.bit_weights = t["bit_weights"].get<std::vector<double>>();
  }
  tc.validate(cfg.segments);
  return tc;
}

void print_eval_report(const EvalReport& rep) {
  std::cout << "samples: " << rep.count << "\n";
  std::cout << "exact-match accuracy: " << rep.exact_match << " ("
            << rep.exact_matches << "/" << rep.count << ")\n";
  for (std::size_t ch = 0; ch < rep.symbol_error_rate.size(); ++ch)
    std::cout << "channel " << (ch + 1)
              << " symbol error rate: " << rep.symbol_error_rate[ch] << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"optinc: optical in-network gradient aggregation simulator"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--seed", g.seed, "global seed (overrides config)");
  app.add_option("--out-dir", g.out_dir, "output directory for artifacts");
  app.add_option("--max-size", g.max_size, "refuse exhaustive work above this");
  app.add_option("--threads", g.threads, "worker threads for linear algebra");

  // ---- gen-dataset ----------------------------------------------------------
  auto* cmd_gen = app.add_subcommand("gen-dataset", "generate oracle datasets");
  SystemOpts gen_sys;
  std::string gen_mode = "exhaustive", gen_out = "dataset.bin", gen_csv;
  std::uint64_t gen_count = 10000;
  bool gen_cascade = false;
  auto* gb = cmd_gen->add_option("--B", gen_sys.bit_width, "bit width");
  auto* gn = cmd_gen->add_option("--N", gen_sys.servers, "server count");
  auto* gk = cmd_gen->add_option("--K", gen_sys.onn_inputs, "ONN input count");
  auto* gq = cmd_gen->add_option("--quantizer", gen_sys.quantizer, "floor | nearest");
  cmd_gen->add_option("--mode", gen_mode, "exhaustive | sampled");
  cmd_gen->add_option("--count", gen_count, "sample count (sampled mode)");
  cmd_gen->add_flag("--cascade", gen_cascade, "emit level-1/level-2 cascade datasets");
  cmd_gen->add_option("--out", gen_out, "output file (under --out-dir)");
  cmd_gen->add_option("--csv", gen_csv, "also export CSV to this path");

  // ---- train ----------------------------------------------------------------
  auto* cmd_train = app.add_subcommand("train", "train the ONN surrogate");
  OnnOpts train_onn;
  std::string train_ds, train_ckpt = "model.ckpt", train_report = "train_report.csv";
  TrainConfig train_tc = make_train_config(0);  // 0 marks "not set"
  train_tc.epochs = 0;
  cmd_train->add_option("--dataset", train_ds, "training dataset file")->required();
  cmd_train->add_option("--preset", train_onn.preset, "table1-row1..4");
  cmd_train->add_option("--layers", train_onn.layers, "layer dims, e.g. 4,64,4");
  cmd_train->add_option("--approx", train_onn.approx, "approx layers: all|none|1,2,..");
  cmd_train->add_option("--activation", train_onn.activation, "relu|gelu|tanh");
  cmd_train->add_flag("--no-bias", train_onn.no_bias, "disable bias terms");
  auto* te = cmd_train->add_option("--epochs", train_tc.epochs, "training epochs");
  auto* ts = cmd_train->add_option("--stage-switch", train_tc.stage_switch,
                                   "epoch switching to the word-level loss");
  cmd_train->add_option("--projection-period", train_tc.projection_period,
                        "epochs between hard projections");
  cmd_train->add_option("--lr", train_tc.lr_initial, "initial learning rate");
  cmd_train->add_option("--lr-decay", train_tc.lr_decay, "final lr fraction");
  cmd_train->add_option("--batch", train_tc.batch_size, "batch size");
  cmd_train->add_option("--out", train_ckpt, "checkpoint file");
  cmd_train->add_option("--report", train_report, "per-epoch CSV report");

  // ---- eval -----------------------------------------------------------------
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_ds;
  cmd_eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  cmd_eval->add_option("--dataset", eval_ds, "evaluation dataset")->required();

  // ---- cost -----------------------------------------------------------------
  auto* cmd_cost = app.add_subcommand("cost", "MZI cost / area-ratio model");
  OnnOpts cost_onn;
  std::string cost_out;
  cmd_cost->add_option("--preset", cost_onn.preset, "table1-row1..4");
  cmd_cost->add_option("--layers", cost_onn.layers, "layer dims");
  cmd_cost->add_option("--approx", cost_onn.approx, "approx layers: all|none|list");
  cmd_cost->add_option("--out", cost_out, "CSV report path");

  // ---- decompose ------------------------------------------------------------
  auto* cmd_dec = app.add_subcommand("decompose",
                                     "mesh programs for projected factors");
  std::string dec_ckpt;
  int dec_layer = 0;  // 0 = all projected layers
  cmd_dec->add_option("--checkpoint", dec_ckpt, "projected checkpoint")->required();
  cmd_dec->add_option("--layer", dec_layer, "restrict to one 1-based layer");

  // ---- cascade-sim ----------------------------------------------------------
  auto* cmd_cas = app.add_subcommand("cascade-sim", "two-level cascade sweeps");
  SystemOpts cas_sys;
  cas_sys.servers = 2;
  cas_sys.bit_width = 4;
  bool cas_oracle = false, cas_exhaustive = false;
  std::string cas_words;
  auto* cb = cmd_cas->add_option("--B", cas_sys.bit_width, "bit width");
  auto* cn = cmd_cas->add_option("--N", cas_sys.servers, "fan-in per level");
  auto* ck = cmd_cas->add_option("--K", cas_sys.onn_inputs, "ONN input count");
  auto* cq = cmd_cas->add_option("--quantizer", cas_sys.quantizer, "floor | nearest");
  cmd_cas->add_flag("--oracle", cas_oracle, "replace ONNs by the exact oracle");
  cmd_cas->add_flag("--exhaustive", cas_exhaustive, "sweep all N^2-word inputs");
  cmd_cas->add_option("--words", cas_words, "one case, e.g. 2,1,1,0");

  // ---- rounds ---------------------------------------------------------------
  auto* cmd_rounds = app.add_subcommand("rounds", "ring vs OptINC round counts");
  std::string rounds_n = "4";
  cmd_rounds->add_option("--N", rounds_n, "server count(s), comma separated");

  // ---- e2e ------------------------------------------------------------------
  auto* cmd_e2e = app.add_subcommand("e2e", "toy data-parallel training runs");
  std::string e2e_agg = "exact_mean", e2e_out = "e2e_curves.csv", e2e_unit;
  E2eConfig e2e_cfg;
  cmd_e2e->add_option("--agg", e2e_agg,
                      "exact_mean|ring|optinc_oracle|optinc_trained|all");
  auto* en = cmd_e2e->add_option("--N", e2e_cfg.servers, "shard count");
  auto* eb = cmd_e2e->add_option("--B", e2e_cfg.bit_width, "quantization bits");
  cmd_e2e->add_option("--steps", e2e_cfg.steps, "training steps");
  cmd_e2e->add_option("--lr", e2e_cfg.lr, "SGD learning rate");
  cmd_e2e->add_option("--clip", e2e_cfg.clip, "fixed-point clip magnitude");
  cmd_e2e->add_option("--unit-checkpoint", e2e_unit, "unit model for optinc_trained");
  cmd_e2e->add_option("--out", e2e_out, "curves CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    g.config = load_config(g.config_path);
    if (g.config.contains("paths") && g.config["paths"].contains("out_dir") &&
        g.out_dir == ".")
      g.out_dir = g.config["paths"]["out_dir"].get<std::string>();
    Eigen::setNbThreads(static_cast<int>(g.threads));
#ifdef _OPENMP
    omp_set_num_threads(static_cast<int>(g.threads));
#endif
    const auto out_path = [&](const std::string& p) {
      const fs::path fp(p);
      return fp.is_absolute() ? fp : g.out_dir / fp;
    };

    if (cmd_gen->parsed()) {
      const SystemConfig cfg = resolve_system(g, gen_sys, gb->count() > 0,
                                              gn->count() > 0, gk->count() > 0,
                                              gq->count() > 0);
      std::cout << "dataset size (N(4^g-1)+1)^K = " << dataset_size(cfg) << "\n";
      const DatasetMode mode =
          gen_mode == "sampled" ? DatasetMode::sampled : DatasetMode::exhaustive;
      if (gen_cascade) {
        auto [l1, l2] =
            generate_cascade_datasets(cfg, mode, g.seed, g.max_size, gen_count);
        const fs::path base = out_path(gen_out);
        fs::path p1 = base, p2 = base;
        p1.replace_filename(base.stem().string() + "_level1" +
                            base.extension().string());
        p2.replace_filename(base.stem().string() + "_level2" +
                            base.extension().string());
        save_dataset(p1, l1);
        save_dataset(p2, l2);
        std::cout << "wrote " << p1.string() << " (" << l1.samples.size()
                  << " samples)\n";
        std::cout << "wrote " << p2.string() << " (" << l2.samples.size()
                  << " samples)\n";
        if (!gen_csv.empty()) {
          export_dataset_csv(out_path(gen_csv + ".level1.csv"), l1);
          export_dataset_csv(out_path(gen_csv + ".level2.csv"), l2);
        }
      } else {
        const AggregationDataset ds =
            generate_dataset(cfg, mode, g.seed, g.max_size, gen_count);
        save_dataset(out_path(gen_out), ds);
        std::cout << "wrote " << out_path(gen_out).string() << " ("
                  << ds.samples.size() << " samples)\n";
        if (!gen_csv.empty()) export_dataset_csv(out_path(gen_csv), ds);
      }
    } else if (cmd_train->parsed()) {
      const AggregationDataset ds = load_dataset(out_path(train_ds));
      const SystemConfig cfg = ds.cfg;
      const OnnSpec spec = resolve_spec(g, cfg, train_onn);
      TrainConfig tc = make_train_config(
          te->count() > 0 || train_tc.epochs > 0 ? train_tc.epochs : 300, g.seed);
      tc.projection_period = train_tc.projection_period;
      tc.lr_initial = train_tc.lr_initial;
      tc.lr_decay = train_tc.lr_decay;
      tc.batch_size = train_tc.batch_size;
      if (ts->count() > 0) tc.stage_switch = train_tc.stage_switch;
      tc = resolve_train(g, cfg, tc);
      auto [model, report] = train(spec, ds, tc, cfg);
      save_checkpoint(out_path(train_ckpt), model);
      write_train_report_csv(out_path(train_report), report);
      std::cout << "final exact-match accuracy: " << report.final_accuracy << "\n";
      std::cout << "wall seconds: " << report.wall_seconds << "\n";
      std::cout << "wrote " << out_path(train_ckpt).string() << "\n";
    } else if (cmd_eval->parsed()) {
      const AggregationDataset ds = load_dataset(out_path(eval_ds));
      const OnnModel model = load_checkpoint(out_path(eval_ckpt));
      print_eval_report(evaluate(model, ds, ds.cfg));
    } else if (cmd_cost->parsed()) {
      std::vector<unsigned> dims;
      std::set<unsigned> approx;
      if (!cost_onn.preset.empty()) {
        const Table1Preset& p = find_preset(cost_onn.preset);
        dims = p.layer_dims;
        approx = cost_onn.approx == "none"
                     ? p.approx_layers
                     : parse_approx(cost_onn.approx,
                                    static_cast<unsigned>(dims.size() - 1));
      } else if (!cost_onn.layers.empty()) {
        dims = parse_uint_list(cost_onn.layers);
        approx = parse_approx(cost_onn.approx,
                              static_cast<unsigned>(dims.size() - 1));
      } else {
        throw DomainError("cost needs --preset or --layers");
      }
      const CostReport rep = mzi_cost(dims, approx);
      std::cout << "total full MZIs: " << rep.total_full << "\n";
      std::cout << "total effective MZIs: " << rep.total_effective << "\n";
      std::cout << "area ratio: " << rep.area_ratio * 100.0 << "%\n";
      if (!cost_out.empty()) write_cost_csv(out_path(cost_out), rep);
    } else if (cmd_dec->parsed()) {
      const OnnModel model = load_checkpoint(out_path(dec_ckpt));
      unsigned written = 0;
      for (unsigned l = 1; l <= model.spec.num_weight_layers(); ++l) {
        if (dec_layer != 0 && static_cast<unsigned>(dec_layer) != l) continue;
        if (!model.layer_projected(l)) continue;
        for (const ApproxFactor& f : model.approx_factors[l - 1]) {
          const Matrix defect =
              f.u.transpose() * f.u - Matrix::Identity(f.u.rows(), f.u.cols());
          if (defect.cwiseAbs().maxCoeff() > 1e-8)
            throw NumericError("projected factor is not orthogonal (layer " +
                               std::to_string(l) + ")");
          const MeshProgram mesh = decompose_orthogonal(f.u);
          std::ostringstream name;
          name << "layer" << l << "_block" << f.row_block << "_" << f.col_block
               << ".mesh";
          write_mesh_program(g.out_dir / name.str(), mesh);
          ++written;
        }
      }
      if (written == 0)
        throw DomainError("checkpoint has no projected factors to decompose");
      std::cout << "wrote " << written << " mesh program(s) under "
                << g.out_dir.string() << "\n";
    } else if (cmd_cas->parsed()) {
      const SystemConfig cfg = resolve_system(g, cas_sys, cb->count() > 0,
                                              cn->count() > 0, ck->count() > 0,
                                              cq->count() > 0);
      if (!cas_oracle)
        throw DomainError(
            "cascade-sim currently requires --oracle (model-backed sweeps "
            "need trained level-1/level-2 checkpoints)");
      const CascadeTopology topo = make_oracle_cascade(cfg);
      const unsigned leaves = cfg.servers * cfg.servers;
      if (!cas_words.empty()) {
        const auto vals = parse_uint_list(cas_words);
        if (vals.size() != leaves)
          throw DomainError("--words needs N^2 = " + std::to_string(leaves) +
                            " values");
        std::vector<GradientWord> in;
        std::int64_t sum = 0;
        for (unsigned v : vals) {
          in.push_back(GradientWord{v});
          sum += v;
        }
        const std::int64_t expect = apply_quantizer(
            Rat(sum, static_cast<std::int64_t>(leaves)), cfg.quantizer);
        std::cout << "global target Q(mean) = " << expect << "\n";
        std::cout << "corrected   = " << cascade_aggregate(topo, in, true).code
                  << "\n";
        std::cout << "uncorrected = " << cascade_aggregate(topo, in, false).code
                  << "\n";
      }
      if (cas_exhaustive) {
        std::uint64_t combos = 1;
        for (unsigned i = 0; i < leaves; ++i) {
          if (combos > g.max_size / cfg.code_range() + 1)
            throw DomainError("exhaustive cascade sweep exceeds --max-size");
          combos *= cfg.code_range();
        }
        if (combos > g.max_size)
          throw DomainError("exhaustive cascade sweep of " +
                            std::to_string(combos) + " cases exceeds --max-size");
        std::uint64_t bad_corr = 0, bad_unc = 0;
        std::vector<GradientWord> in(leaves);
        for (std::uint64_t idx = 0; idx < combos; ++idx) {
          std::uint64_t rem = idx;
          std::int64_t sum = 0;
          for (unsigned i = 0; i < leaves; ++i) {
            in[i] = GradientWord{rem % cfg.code_range()};
            sum += static_cast<std::int64_t>(in[i].code);
            rem /= cfg.code_range();
          }
          const std::uint64_t expect = static_cast<std::uint64_t>(apply_quantizer(
              Rat(sum, static_cast<std::int64_t>(leaves)), cfg.quantizer));
          if (cascade_aggregate(topo, in, true).code != expect) ++bad_corr;
          if (cascade_aggregate(topo, in, false).code != expect) ++bad_unc;
        }
        std::cout << "cases: " << combos << "\n";
        std::cout << "corrected mismatches:   " << bad_corr << "\n";
        std::cout << "uncorrected mismatches: " << bad_unc << "\n";
      }
    } else if (cmd_rounds->parsed()) {
      for (unsigned n : parse_uint_list(rounds_n)) {
        const OverheadReport rep = overhead_report(n);
        std::cout << "N=" << n << ": ring rounds " << rep.ring_rounds
                  << ", optinc rounds " << rep.optinc_rounds
                  << ", relative overhead " << rep.relative_overhead << "\n";
      }
    } else if (cmd_e2e->parsed()) {
      e2e_cfg.seed = g.seed;
      if (en->count() == 0)
        from_config(g.config, "system", "servers", e2e_cfg.servers, false);
      if (eb->count() == 0)
        from_config(g.config, "system", "bit_width", e2e_cfg.bit_width, false);
      OnnModel unit_model;
      std::vector<std::pair<std::string, E2eResult>> runs;
      const auto run_one = [&](Aggregation agg) {
        e2e_cfg.agg = agg;
        if (agg == Aggregation::optinc_trained) {
          if (e2e_unit.empty())
            throw DomainError("optinc_trained needs --unit-checkpoint");
          unit_model = load_checkpoint(out_path(e2e_unit));
          e2e_cfg.unit_model = &unit_model;
        }
        const E2eResult r = e2e_toy_training(e2e_cfg);
        if (r.unit_warning)
          std::cout << "warning: unit model below 100% accuracy on its grid; "
                       "run proceeds\n";
        std::cout << to_string(agg) << ": final loss " << r.loss.back()
                  << ", final accuracy " << r.final_accuracy << "\n";
        runs.emplace_back(to_string(agg), r);
      };
      if (e2e_agg == "all") {
        run_one(Aggregation::exact_mean);
        run_one(Aggregation::ring);
        run_one(Aggregation::optinc_oracle);
        if (!e2e_unit.empty()) run_one(Aggregation::optinc_trained);
      } else if (e2e_agg == "exact_mean") {
        run_one(Aggregation::exact_mean);
      } else if (e2e_agg == "ring") {
        run_one(Aggregation::ring);
      } else if (e2e_agg == "optinc_oracle") {
        run_one(Aggregation::optinc_oracle);
      } else if (e2e_agg == "optinc_trained") {
        run_one(Aggregation::optinc_trained);
      } else {
        throw DomainError("unknown aggregation '" + e2e_agg + "'");
      }
      write_e2e_csv(out_path(e2e_out), runs);
      std::cout << "wrote " << out_path(e2e_out).string() << "\n";
    }
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const OverflowError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
