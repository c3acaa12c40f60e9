#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <vector>

#include "optinc/config.hpp"
#include "optinc/io_util.hpp"
#include "optinc/onn.hpp"
#include "optinc/oracle.hpp"
#include "optinc/rng.hpp"

namespace optinc {

// W_T^(i) proportional to the reconstruction weight 4^{M-i} of output bit i.
inline std::vector<double> default_bit_weights(unsigned segments) {
  std::vector<double> w(segments);
  double total = 0.0;
  for (unsigned i = 0; i < segments; ++i) {
    w[i] = std::pow(4.0, static_cast<double>(segments - 1 - i));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

struct TrainConfig {
  unsigned epochs = 200;        // E_total
  unsigned stage_switch = 160;  // E1: weighted-MSE epochs before word-level loss
  std::vector<double> bit_weights;  // W_T, size M, sums to 1
  unsigned projection_period = 10;
  double lr_initial = 1e-3;
  double lr_decay = 0.01;  // cosine decay down to lr_initial * lr_decay
  unsigned batch_size = 256;
  std::uint64_t seed = 1;
  bool ste_enabled = true;

  void validate(unsigned segments) const {
    if (epochs == 0) throw DomainError("epochs must be positive");
    if (stage_switch > epochs) throw DomainError("stage_switch must be <= epochs");
    if (projection_period < 1) throw DomainError("projection_period must be >= 1");
    if (batch_size < 1) throw DomainError("batch_size must be >= 1");
    if (!bit_weights.empty()) {
      if (bit_weights.size() != segments)
        throw DomainError("bit_weights length != M");
      double sum = 0.0;
      for (double w : bit_weights) {
        if (w <= 0.0) throw DomainError("bit_weights must be positive");
        sum += w;
      }
      if (std::abs(sum - 1.0) > 1e-12)
        throw DomainError("bit_weights must sum to 1");
    }
  }
};

inline TrainConfig make_train_config(unsigned epochs, std::uint64_t seed = 1) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.stage_switch = static_cast<unsigned>(0.8 * epochs);
  tc.seed = seed;
  return tc;
}

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<unsigned> epoch_stage;   // 1 or 2
  std::vector<char> projection_flag;   // 1 when that epoch ended in a projection
  std::vector<double> epoch_accuracy;  // NaN when not evaluated that epoch
  unsigned stage_switch_epoch = 0;
  double final_accuracy = 0.0;
  double wall_seconds = 0.0;
};

namespace detail {

struct ForwardCache {
  std::vector<Matrix> pre;   // z per layer
  std::vector<Matrix> post;  // activations per layer (post[0] is scaled input)
  Matrix out;                // output in PAM4 level units
};

inline ForwardCache forward_cached(const OnnModel& m, const Matrix& x_grid) {
  ForwardCache c;
  const unsigned L = m.spec.num_weight_layers();
  c.post.reserve(L + 1);
  c.pre.reserve(L);
  c.post.push_back(x_grid * m.spec.input_scale);
  for (unsigned l = 0; l < L; ++l) {
    Matrix z = m.weights[l] * c.post.back();
    if (m.spec.use_bias) z.colwise() += m.biases[l];
    c.pre.push_back(z);
    if (l + 1 < L) {
      Eigen::ArrayXXd a = z.array();
      apply_activation(a, m.spec.activation);
      c.post.push_back(a.matrix());
    } else {
      c.post.push_back(std::move(z));
    }
  }
  c.out = c.post.back() * m.spec.output_scale;
  return c;
}

struct Grads {
  std::vector<Matrix> w;
  std::vector<Vector> b;
};

inline Grads backward(const OnnModel& m, const ForwardCache& c, const Matrix& d_out) {
  const unsigned L = m.spec.num_weight_layers();
  Grads g;
  g.w.resize(L);
  g.b.resize(L);
  Matrix dz = d_out * m.spec.output_scale;  // d loss / d z_L
  for (unsigned l = L; l-- > 0;) {
    g.w[l] = dz * c.post[l].transpose();
    g.b[l] = dz.rowwise().sum();
    if (l > 0) {
      Matrix dx = m.weights[l].transpose() * dz;
      dz = (dx.array() * activation_grad(c.pre[l - 1].array(), m.spec.activation))
               .matrix();
    }
  }
  return g;
}

// Snap outputs and reconstruct words, with the level-1 carry channel on its
// extended 1/N grid. Returns the reconstructed value per sample.
inline Eigen::RowVectorXd reconstruct_words(const Matrix& out,
                                            const SystemConfig& cfg,
                                            bool extended_last) {
  const unsigned M = cfg.segments;
  const double n = static_cast<double>(cfg.servers);
  Eigen::RowVectorXd words = Eigen::RowVectorXd::Zero(out.cols());
  for (unsigned ch = 0; ch < M; ++ch) {
    const double weight = std::pow(4.0, static_cast<double>(M - 1 - ch));
    for (Eigen::Index i = 0; i < out.cols(); ++i) {
      double v;
      if (extended_last && ch + 1 == M) {
        double idx = std::floor(out(ch, i) * n + 0.5);
        idx = std::min(3.0 * n + n - 1, std::max(0.0, idx));
        v = idx / n;
      } else {
        v = std::min(3.0, std::max(0.0, std::floor(out(ch, i) + 0.5)));
      }
      words(i) += weight * v;
    }
  }
  return words;
}

}  // namespace detail

// Two-stage loss for one sample (Eq.-7 semantics): weighted per-symbol MSE
// before the switch epoch, squared reconstruction error after it.
inline double sample_loss(const std::vector<double>& outputs,
                          const AggregationSample& sample, unsigned epoch,
                          const TrainConfig& tc, const SystemConfig& cfg,
                          bool extended_last = false) {
  if (epoch >= tc.epochs) throw DomainError("epoch outside [0, E_total)");
  if (outputs.size() != cfg.segments) throw DomainError("output length != M");
  if (epoch < tc.stage_switch) {
    const std::vector<double> wt =
        tc.bit_weights.empty() ? default_bit_weights(cfg.segments) : tc.bit_weights;
    double loss = 0.0;
    for (unsigned i = 0; i < cfg.segments; ++i) {
      const double d = outputs[i] - sample.target_symbols[i].value();
      loss += wt[i] * d * d;
    }
    return loss;
  }
  Matrix out(cfg.segments, 1);
  for (unsigned i = 0; i < cfg.segments; ++i) out(i, 0) = outputs[i];
  const double got = detail::reconstruct_words(out, cfg, extended_last)(0);
  const double want =
      static_cast<double>(sample.target_word.code) + sample.carry.value();
  return (got - want) * (got - want);
}

// Straight-through helper exposed for tests: d(reconstruction)/d(output_i)
// is the positional weight 4^{M-1-i} when the STE is enabled.
inline double ste_weight(unsigned channel, const SystemConfig& cfg) {
  return std::pow(4.0, static_cast<double>(cfg.segments - 1 - channel));
}

// Hardware-aware training: two-stage loss, Adam with cosine decay, periodic
// hard projection of the selected layers, unconditional enforcement at the
// end. Deterministic given (spec, ds, tc, cfg).
inline std::pair<OnnModel, TrainReport> train(const OnnSpec& spec,
                                              const AggregationDataset& ds,
                                              const TrainConfig& tc,
                                              const SystemConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  spec.validate();
  tc.validate(cfg.segments);
  if (spec.layer_dims.front() != cfg.onn_inputs ||
      spec.layer_dims.back() != cfg.segments)
    throw DomainError("ONN spec dims do not match system config");
  if (ds.samples.empty()) throw DomainError("empty training dataset");
  if (ds.cfg.onn_inputs != cfg.onn_inputs || ds.cfg.segments != cfg.segments)
    throw DomainError("dataset does not match system config");

  const std::size_t D = ds.samples.size();
  const unsigned M = cfg.segments;
  const unsigned K = cfg.onn_inputs;
  const bool extended = ds.cascade_level == 1;
  const std::vector<double> wt =
      tc.bit_weights.empty() ? default_bit_weights(M) : tc.bit_weights;

  Matrix x_all(K, D), t_sym(M, D);
  Eigen::RowVectorXd t_word(D);
  for (std::size_t i = 0; i < D; ++i) {
    const AggregationSample& s = ds.samples[i];
    for (unsigned k = 0; k < K; ++k) x_all(k, i) = s.inputs.a[k].value();
    for (unsigned m = 0; m < M; ++m) t_sym(m, i) = s.target_symbols[m].value();
    t_word(i) = static_cast<double>(s.target_word.code) + s.carry.value();
  }
  Vector wt_vec(M);
  for (unsigned i = 0; i < M; ++i) wt_vec(i) = wt[i];
  Vector pos_weight(M);
  for (unsigned i = 0; i < M; ++i) pos_weight(i) = ste_weight(i, cfg);

  OnnModel model = init_model(spec, tc.seed);
  const unsigned L = spec.num_weight_layers();

  // Adam state
  std::vector<Matrix> mw(L), vw(L);
  std::vector<Vector> mb(L), vb(L);
  for (unsigned l = 0; l < L; ++l) {
    mw[l] = Matrix::Zero(model.weights[l].rows(), model.weights[l].cols());
    vw[l] = mw[l];
    mb[l] = Vector::Zero(model.biases[l].size());
    vb[l] = mb[l];
  }
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::uint64_t step = 0;

  Rng shuffle_rng(tc.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::uint32_t> order(D);
  std::iota(order.begin(), order.end(), 0u);

  TrainReport report;
  report.stage_switch_epoch = tc.stage_switch;
  report.epoch_loss.resize(tc.epochs);
  report.epoch_stage.resize(tc.epochs);
  report.projection_flag.assign(tc.epochs, 0);
  report.epoch_accuracy.assign(tc.epochs, std::numeric_limits<double>::quiet_NaN());

  const double lr_final = tc.lr_initial * tc.lr_decay;
  const std::size_t bsz = std::min<std::size_t>(tc.batch_size, D);
  Matrix xb(K, bsz), tb(M, bsz);
  Eigen::RowVectorXd wb(bsz);

  bool projected_at_last_epoch = false;
  for (unsigned epoch = 0; epoch < tc.epochs; ++epoch) {
    const bool stage1 = epoch < tc.stage_switch;
    const double lr = lr_final + (tc.lr_initial - lr_final) * 0.5 *
                                     (1.0 + std::cos(M_PI * epoch / tc.epochs));
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t base = 0; base < D; base += bsz) {
      const std::size_t cnt = std::min(bsz, D - base);
      xb.resize(K, cnt);
      tb.resize(M, cnt);
      wb.resize(cnt);
      for (std::size_t i = 0; i < cnt; ++i) {
        const std::uint32_t src = order[base + i];
        xb.col(i) = x_all.col(src);
        tb.col(i) = t_sym.col(src);
        wb(i) = t_word(src);
      }
      detail::ForwardCache cache = detail::forward_cached(model, xb);
      Matrix d_out(M, cnt);
      if (stage1) {
        const Matrix diff = cache.out - tb;
        loss_sum += (diff.array().square().colwise() * wt_vec.array()).sum();
        d_out = (2.0 / static_cast<double>(cnt)) *
                (diff.array().colwise() * wt_vec.array()).matrix();
      } else {
        const Eigen::RowVectorXd got =
            detail::reconstruct_words(cache.out, cfg, extended);
        const Eigen::RowVectorXd err = got - wb;
        loss_sum += err.squaredNorm();
        if (tc.ste_enabled) {
          d_out = (2.0 / static_cast<double>(cnt)) * pos_weight * err;
        } else {
          d_out.setZero();  // true quantizer derivative is zero a.e.
        }
      }
      detail::Grads g = detail::backward(model, cache, d_out);
      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (unsigned l = 0; l < L; ++l) {
        mw[l] = beta1 * mw[l] + (1.0 - beta1) * g.w[l];
        vw[l] = (beta2 * vw[l].array() + (1.0 - beta2) * g.w[l].array().square())
                    .matrix();
        model.weights[l].array() -=
            lr * (mw[l].array() / bc1) /
            ((vw[l].array() / bc2).sqrt() + adam_eps);
        if (spec.use_bias) {
          mb[l] = beta1 * mb[l] + (1.0 - beta1) * g.b[l];
          vb[l] = (beta2 * vb[l].array() + (1.0 - beta2) * g.b[l].array().square())
                      .matrix();
          model.biases[l].array() -=
              lr * (mb[l].array() / bc1) /
              ((vb[l].array() / bc2).sqrt() + adam_eps);
        }
      }
    }
    const double epoch_loss = loss_sum / static_cast<double>(D);
    if (!std::isfinite(epoch_loss))
      throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                         " (loss not finite)");
    report.epoch_loss[epoch] = epoch_loss;
    report.epoch_stage[epoch] = stage1 ? 1 : 2;

    const bool project_now =
        !spec.approx_layers.empty() && (epoch + 1) % tc.projection_period == 0;
    if (project_now) {
      for (unsigned l : spec.approx_layers)
        model.approx_factors[l - 1] = project_layer(model.weights[l - 1]);
      report.projection_flag[epoch] = 1;
      report.epoch_accuracy[epoch] = evaluate(model, ds, cfg).exact_match;
      projected_at_last_epoch = epoch + 1 == tc.epochs;
    }
  }

  // enforce the approximated structure on the returned model
  if (!spec.approx_layers.empty() && !projected_at_last_epoch) {
    for (unsigned l : spec.approx_layers)
      model.approx_factors[l - 1] = project_layer(model.weights[l - 1]);
    if (!report.projection_flag.empty()) report.projection_flag.back() = 1;
  }

  report.final_accuracy = evaluate(model, ds, cfg).exact_match;
  if (!report.epoch_accuracy.empty())
    report.epoch_accuracy.back() = report.final_accuracy;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return {std::move(model), std::move(report)};
}

// Analytic backprop vs central finite differences (step 1e-5) on the
// stage-1 loss over up to n_params randomly chosen parameters.
inline double finite_difference_check(OnnModel& model,
                                      const AggregationSample& sample,
                                      const TrainConfig& tc,
                                      const SystemConfig& cfg,
                                      unsigned n_params = 100,
                                      std::uint64_t seed = 7) {
  const unsigned M = cfg.segments;
  Matrix x(model.spec.layer_dims.front(), 1);
  for (Eigen::Index k = 0; k < x.rows(); ++k) x(k, 0) = sample.inputs.a[k].value();

  const std::vector<double> wt =
      tc.bit_weights.empty() ? default_bit_weights(M) : tc.bit_weights;
  Vector wt_vec(M);
  for (unsigned i = 0; i < M; ++i) wt_vec(i) = wt[i];

  auto loss_at = [&]() {
    const Matrix out = forward_batch(model, x);
    std::vector<double> o(out.data(), out.data() + out.rows());
    return sample_loss(o, sample, /*epoch=*/0, tc, cfg);
  };

  detail::ForwardCache cache = detail::forward_cached(model, x);
  Matrix t(M, 1);
  for (unsigned i = 0; i < M; ++i) t(i, 0) = sample.target_symbols[i].value();
  const Matrix d_out = 2.0 * ((cache.out - t).array().colwise() * wt_vec.array()).matrix();
  detail::Grads g = detail::backward(model, cache, d_out);

  // flatten parameter addressing: (layer, is_bias, row, col)
  struct ParamRef {
    unsigned layer;
    bool bias;
    Eigen::Index r, c;
  };
  std::vector<ParamRef> params;
  for (unsigned l = 0; l < model.spec.num_weight_layers(); ++l) {
    for (Eigen::Index r = 0; r < model.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < model.weights[l].cols(); ++c)
        params.push_back({l, false, r, c});
    if (model.spec.use_bias)
      for (Eigen::Index r = 0; r < model.biases[l].size(); ++r)
        params.push_back({l, true, r, 0});
  }
  Rng rng(seed);
  rng.shuffle(params);
  const std::size_t n = std::min<std::size_t>(n_params, params.size());

  const double h = 1e-5;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const ParamRef& p = params[i];
    double& ref = p.bias ? model.biases[p.layer](p.r)
                         : model.weights[p.layer](p.r, p.c);
    const double orig = ref;
    ref = orig + h;
    const double lp = loss_at();
    ref = orig - h;
    const double lm = loss_at();
    ref = orig;
    const double fd = (lp - lm) / (2.0 * h);
    const double an = p.bias ? g.b[p.layer](p.r) : g.w[p.layer](p.r, p.c);
    const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

// Smallest |pre-activation| across hidden units for one input; relu kink
// filtering in the finite-difference tests keys off this.
inline double min_preactivation_margin(const OnnModel& model,
                                       const AggregationSample& sample) {
  Matrix x(model.spec.layer_dims.front(), 1);
  for (Eigen::Index k = 0; k < x.rows(); ++k) x(k, 0) = sample.inputs.a[k].value();
  detail::ForwardCache cache = detail::forward_cached(model, x);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l + 1 < cache.pre.size(); ++l)
    margin = std::min(margin, cache.pre[l].cwiseAbs().minCoeff());
  return margin;
}

inline void write_train_report_csv(const std::filesystem::path& path,
                                   const TrainReport& rep) {
  atomic_write(path, [&](std::ostream& os) {
    os.precision(17);
    os << "epoch,stage,loss,accuracy,projection\n";
    for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) {
      os << e << "," << rep.epoch_stage[e] << "," << rep.epoch_loss[e] << ",";
      if (!std::isnan(rep.epoch_accuracy[e])) os << rep.epoch_accuracy[e];
      os << "," << static_cast<int>(rep.projection_flag[e]) << "\n";
    }
  });
}

}  // namespace optinc
