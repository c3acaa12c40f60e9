#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "optinc/trainer.hpp"

using namespace optinc;

TEST(Trainer, DefaultBitWeights) {
  const auto w = default_bit_weights(4);
  ASSERT_EQ(w.size(), 4u);
  double sum = 0.0;
  for (double v : w) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-15);
  EXPECT_NEAR(w[0] / w[1], 4.0, 1e-12);
  EXPECT_NEAR(w[2] / w[3], 4.0, 1e-12);
}

TEST(Trainer, SampleLossStage1Example) {
  const SystemConfig cfg = make_config(4, 2, 2);  // M = 2
  TrainConfig tc = make_train_config(10);
  tc.stage_switch = 10;
  tc.bit_weights = {0.8, 0.2};
  AggregationSample s;
  s.target_symbols = {Rat(0), Rat(1)};
  s.target_word = GradientWord{1};
  EXPECT_DOUBLE_EQ(sample_loss({1.0, 1.0}, s, 0, tc, cfg), 0.8);
  EXPECT_DOUBLE_EQ(sample_loss({0.0, 1.0}, s, 0, tc, cfg), 0.0);
  EXPECT_THROW(sample_loss({0.0, 1.0}, s, 10, tc, cfg), DomainError);
  EXPECT_THROW(sample_loss({0.0}, s, 0, tc, cfg), DomainError);
}

TEST(Trainer, SampleLossStage2Example) {
  const SystemConfig cfg = make_config(4, 2, 2);
  TrainConfig tc = make_train_config(10);
  tc.stage_switch = 0;  // stage 2 from the start
  AggregationSample s;
  s.target_symbols = {Rat(2), Rat(3)};
  s.target_word = GradientWord{11};
  // outputs snapping to word 12 vs target 11 -> (12-11)^2 = 1
  EXPECT_DOUBLE_EQ(sample_loss({3.1, 0.2}, s, 5, tc, cfg), 1.0);
  // exact reconstruction -> 0
  EXPECT_DOUBLE_EQ(sample_loss({2.2, 2.9}, s, 5, tc, cfg), 0.0);
}

TEST(Trainer, FiniteDifferenceSmoothActivations) {
  const SystemConfig cfg = make_config(4, 2, 2);
  const AggregationDataset ds =
      generate_dataset(cfg, DatasetMode::exhaustive, 0, 1 << 20);
  TrainConfig tc = make_train_config(10);
  for (Activation act : {Activation::tanh, Activation::gelu}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      OnnModel m = init_model(make_onn_spec(cfg, {2, 12, 8, 2}, act), seed);
      const AggregationSample& s = ds.samples[(seed * 11) % ds.samples.size()];
      const double err = finite_difference_check(m, s, tc, cfg, 150, seed);
      EXPECT_LE(err, 1e-5) << "activation " << static_cast<int>(act);
    }
  }
}

TEST(Trainer, FiniteDifferenceReluWithMarginFiltering) {
  const SystemConfig cfg = make_config(4, 2, 2);
  const AggregationDataset ds =
      generate_dataset(cfg, DatasetMode::exhaustive, 0, 1 << 20);
  TrainConfig tc = make_train_config(10);
  unsigned checked = 0;
  for (std::uint64_t seed = 1; seed <= 30 && checked < 5; ++seed) {
    OnnModel m = init_model(make_onn_spec(cfg, {2, 12, 2}, Activation::relu), seed);
    const AggregationSample& s = ds.samples[(seed * 7) % ds.samples.size()];
    if (min_preactivation_margin(m, s) < 1e-3) continue;  // kink too close
    EXPECT_LE(finite_difference_check(m, s, tc, cfg, 100, seed), 1e-5);
    ++checked;
  }
  EXPECT_GE(checked, 3u);
}

TEST(Trainer, FiniteDifferenceAtStationaryPoint) {
  // bias-only model emitting the targets exactly: loss 0, both gradients ~ 0
  const SystemConfig cfg = make_config(4, 2, 2);
  AggregationDataset ds = generate_dataset(cfg, DatasetMode::exhaustive, 0, 1 << 20);
  const AggregationSample s = ds.samples[30];
  TrainConfig tc = make_train_config(10);
  OnnModel m = init_model(make_onn_spec(cfg, {2, 2}, Activation::tanh), 1);
  m.weights[0].setZero();
  for (int i = 0; i < 2; ++i) m.biases[0](i) = s.target_symbols[i].value() / 3.0;
  std::vector<double> out;
  {
    const AnalogFrame f = forward(m, s.inputs);
    out = f.levels;
  }
  EXPECT_NEAR(sample_loss(out, s, 0, tc, cfg), 0.0, 1e-20);
  // gradient of a quadratic at its minimum: absolute error tiny
  const double err = finite_difference_check(m, s, tc, cfg, 50, 3);
  EXPECT_LE(err, 1e-2);  // relative metric with 1e-6 floor on ~1e-11 values
}

TEST(Trainer, ToyExactLearningNoApprox) {
  // N=2, B=4, K=2 exhaustive (49 samples), 2-32-32-2: reaches exact match
  const SystemConfig cfg = make_config(4, 2, 2);
  const AggregationDataset ds =
      generate_dataset(cfg, DatasetMode::exhaustive, 0, 1 << 20);
  const OnnSpec spec = make_onn_spec(cfg, {2, 32, 32, 2});
  TrainConfig tc = make_train_config(2000, 5);
  tc.lr_initial = 1e-2;
  tc.batch_size = 8;
  tc.stage_switch = 1800;
  auto [model, report] = train(spec, ds, tc, cfg);
  EXPECT_DOUBLE_EQ(report.final_accuracy, 1.0);
  EXPECT_EQ(report.epoch_loss.size(), 2000u);

  // monotone sanity over stage 1
  const unsigned s1 = tc.stage_switch;
  std::vector<double> head(report.epoch_loss.begin(),
                           report.epoch_loss.begin() + s1 / 10);
  std::vector<double> tail(report.epoch_loss.begin() + (s1 - s1 / 10),
                           report.epoch_loss.begin() + s1);
  std::nth_element(head.begin(), head.begin() + head.size() / 2, head.end());
  std::nth_element(tail.begin(), tail.begin() + tail.size() / 2, tail.end());
  EXPECT_LT(tail[tail.size() / 2], head[head.size() / 2]);
}

TEST(Trainer, ToyExactLearningWithProjection) {
  const SystemConfig cfg = make_config(4, 2, 2);
  const AggregationDataset ds =
      generate_dataset(cfg, DatasetMode::exhaustive, 0, 1 << 20);
  const OnnSpec spec = make_onn_spec(cfg, {2, 32, 32, 2}, Activation::relu, {1, 2, 3});
  TrainConfig tc = make_train_config(3000, 11);
  tc.lr_initial = 1e-2;
  tc.batch_size = 8;
  tc.stage_switch = 2700;
  tc.projection_period = 10;
  auto [model, report] = train(spec, ds, tc, cfg);
  EXPECT_DOUBLE_EQ(report.final_accuracy, 1.0);

  // the returned model satisfies the factor invariant exactly
  for (unsigned l : spec.approx_layers) {
    ASSERT_TRUE(model.layer_projected(l));
    const auto& factors = model.approx_factors[l - 1];
    const Matrix assembly = assemble_effective_weight(
        static_cast<unsigned>(model.weights[l - 1].rows()),
        static_cast<unsigned>(model.weights[l - 1].cols()), factors);
    EXPECT_EQ((assembly - model.weights[l - 1]).cwiseAbs().maxCoeff(), 0.0);
    for (const auto& f : factors) {
      const Matrix err =
          f.u.transpose() * f.u - Matrix::Identity(f.u.rows(), f.u.cols());
      EXPECT_LT(err.cwiseAbs().maxCoeff(), 1e-10);
    }
  }
  bool any_projection_epoch = false;
  for (char flag : report.projection_flag) any_projection_epoch |= flag != 0;
  EXPECT_TRUE(any_projection_epoch);
}

TEST(Trainer, DeterministicCheckpoints) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "optinc_test_train_det";
  fs::create_directories(dir);
  const SystemConfig cfg = make_config(4, 2, 2);
  const AggregationDataset ds =
      generate_dataset(cfg, DatasetMode::exhaustive, 0, 1 << 20);
  const OnnSpec spec = make_onn_spec(cfg, {2, 16, 2}, Activation::relu, {2});
  TrainConfig tc = make_train_config(40, 123);
  tc.batch_size = 16;
  auto [m1, r1] = train(spec, ds, tc, cfg);
  auto [m2, r2] = train(spec, ds, tc, cfg);
  save_checkpoint(dir / "a.ckpt", m1);
  save_checkpoint(dir / "b.ckpt", m2);
  std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
  const std::string da((std::istreambuf_iterator<char>(fa)), {});
  const std::string db((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(da, db);
  EXPECT_EQ(r1.epoch_loss, r2.epoch_loss);
  fs::remove_all(dir);
}

TEST(Trainer, DivergenceAborts) {
  const SystemConfig cfg = make_config(4, 2, 2);
  const AggregationDataset ds =
      generate_dataset(cfg, DatasetMode::exhaustive, 0, 1 << 20);
  const OnnSpec spec = make_onn_spec(cfg, {2, 16, 2});
  TrainConfig tc = make_train_config(50, 1);
  tc.lr_initial = 1e200;  // guaranteed overflow within a few steps
  EXPECT_THROW(train(spec, ds, tc, cfg), NumericError);
}

TEST(Trainer, ConfigValidation) {
  TrainConfig tc = make_train_config(100);
  EXPECT_NO_THROW(tc.validate(4));
  tc.bit_weights = {0.5, 0.5};
  EXPECT_THROW(tc.validate(4), DomainError);  // wrong length
  tc.bit_weights = {0.5, 0.2, 0.2, 0.2};
  EXPECT_THROW(tc.validate(4), DomainError);  // does not sum to 1
  tc.bit_weights.clear();
  tc.stage_switch = 101;
  EXPECT_THROW(tc.validate(4), DomainError);
}

TEST(Trainer, ReportCsvExport) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "optinc_test_report";
  fs::create_directories(dir);
  const SystemConfig cfg = make_config(4, 2, 2);
  const AggregationDataset ds =
      generate_dataset(cfg, DatasetMode::exhaustive, 0, 1 << 20);
  TrainConfig tc = make_train_config(12, 2);
  auto [model, report] = train(make_onn_spec(cfg, {2, 8, 2}), ds, tc, cfg);
  write_train_report_csv(dir / "r.csv", report);
  std::ifstream is(dir / "r.csv");
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "epoch,stage,loss,accuracy,projection");
  unsigned rows = 0;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  EXPECT_EQ(rows, 12u);
  fs::remove_all(dir);
}
