#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "signhmm/hmm.hpp"
#include "test_support.hpp"

namespace signhmm {
namespace {

using testing::brute_force;
using testing::make_seq;
using testing::random_model;
using testing::random_seq;
using testing::two_state_generator;

HmmModel single_state(double mean, double var) {
  HmmModel m;
  m.topology = build_topology(TopologyKind::Ergodic, 1);
  m.feature_dim = 1;
  m.pi = Eigen::VectorXd::Ones(1);
  m.A = Eigen::MatrixXd::Ones(1, 1);
  m.emissions.emplace_back(GaussianEmission{Eigen::VectorXd::Constant(1, mean), Eigen::VectorXd::Constant(1, var)});
  return m;
}

// The fixed 3-state model from tests/oracles/brute_force.py.
HmmModel reference_model(TopologyKind kind) {
  HmmModel m;
  m.topology = build_topology(kind, 3);
  m.feature_dim = 2;
  m.A.resize(3, 3);
  if (kind == TopologyKind::Ergodic) {
    m.pi = Eigen::Vector3d(0.5, 0.3, 0.2);
    m.A << 0.7, 0.2, 0.1, 0.1, 0.8, 0.1, 0.25, 0.25, 0.5;
  } else {
    m.pi = Eigen::Vector3d(1.0, 0.0, 0.0);
    m.A << 0.6, 0.4, 0.0, 0.0, 0.7, 0.3, 0.0, 0.0, 1.0;
  }
  m.emissions.emplace_back(GaussianEmission{Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0.5)});
  m.emissions.emplace_back(GaussianEmission{Eigen::Vector2d(3, -1), Eigen::Vector2d(2, 1)});
  m.emissions.emplace_back(GaussianEmission{Eigen::Vector2d(-2, 4), Eigen::Vector2d(0.7, 1.5)});
  return m;
}

FeatureSequence reference_seq() { return make_seq({{0.1, -0.2}, {2.5, -0.8}, {3.1, -1.3}, {-1.5, 3.2}}); }

TEST(Topology, ErgodicIsAllTrue) {
  const auto t = build_topology(TopologyKind::Ergodic, 3);
  EXPECT_TRUE(t.mask.all());
  EXPECT_EQ(t.mask.rows(), 3);
}

TEST(Topology, LeftToRightAllowsSelfAndSuccessor) {
  const auto t = build_topology(TopologyKind::LeftToRight, 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_EQ(t.mask(i, j), j == i || j == i + 1) << i << "," << j;
  }
}

TEST(Topology, SingleStateAndZero) {
  const auto t = build_topology(TopologyKind::Ergodic, 1);
  EXPECT_EQ(t.mask.size(), 1);
  EXPECT_TRUE(t.mask(0, 0));
  EXPECT_THROW(build_topology(TopologyKind::Ergodic, 0), std::invalid_argument);
}

TEST(InitModel, UniformSegmentation) {
  // tests/oracles/brute_force.py: frames {0,1},{2,3},{4,5} -> means 0.5, 5, 11.
  const auto seq = make_seq({{0.0}, {1.0}, {4.0}, {6.0}, {9.0}, {13.0}});
  const auto m = init_model({seq}, build_topology(TopologyKind::Ergodic, 3), EmissionKind::Gaussian, 1, 0);
  EXPECT_DOUBLE_EQ(m.emissions[0].gaussian().mean[0], 0.5);
  EXPECT_DOUBLE_EQ(m.emissions[1].gaussian().mean[0], 5.0);
  EXPECT_DOUBLE_EQ(m.emissions[2].gaussian().mean[0], 11.0);
  EXPECT_DOUBLE_EQ(m.emissions[0].gaussian().var[0], 0.25);
  EXPECT_DOUBLE_EQ(m.emissions[2].gaussian().var[0], 4.0);
  EXPECT_NO_THROW(validate_model(m));
}

TEST(InitModel, LengthFourTwoStates) {
  const auto seq = make_seq({{1.0}, {3.0}, {10.0}, {20.0}});
  const auto m = init_model({seq}, build_topology(TopologyKind::Ergodic, 2), EmissionKind::Gaussian, 1, 0);
  EXPECT_DOUBLE_EQ(m.emissions[0].gaussian().mean[0], 2.0);
  EXPECT_DOUBLE_EQ(m.emissions[1].gaussian().mean[0], 15.0);
  // Counts: 0->0 once, 0->1 once, 1->1 once; add-one smoothing.
  EXPECT_DOUBLE_EQ(m.A(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(m.A(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(m.A(1, 0), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.A(1, 1), 2.0 / 3.0);
  EXPECT_EQ(m.pi, Eigen::Vector2d(0.5, 0.5));
}

TEST(InitModel, LeftToRightStartsInStateZero) {
  std::mt19937_64 rng(1);
  const auto seq = random_seq(rng, 12, 2);
  for (auto kind : {EmissionKind::Gaussian, EmissionKind::Gmm}) {
    const auto m = init_model({seq}, build_topology(TopologyKind::LeftToRight, 4), kind, 2, 0);
    EXPECT_EQ(m.pi, Eigen::Vector4d(1, 0, 0, 0));
    EXPECT_NO_THROW(validate_model(m));
  }
}

TEST(InitModel, SegmentMeansNearGenerator) {
  const auto gen = two_state_generator();
  std::vector<FeatureSequence> seqs;
  for (std::uint64_t i = 0; i < 10; ++i) seqs.push_back(sample(gen, 30, 100 + i));

  // Independent recomputation of the uniform-segment means.
  double sums[2] = {0, 0}, counts[2] = {0, 0};
  for (const auto& s : seqs) {
    for (Eigen::Index t = 0; t < s.length(); ++t) {
      const auto k = static_cast<std::size_t>((t * 2) / s.length());
      sums[k] += s.frames(t, 0);
      counts[k] += 1;
    }
  }
  const auto m = init_model(seqs, build_topology(TopologyKind::Ergodic, 2), EmissionKind::Gaussian, 1, 0);
  EXPECT_NEAR(m.emissions[0].gaussian().mean[0], sums[0] / counts[0], 1e-12);
  EXPECT_NEAR(m.emissions[1].gaussian().mean[0], sums[1] / counts[1], 1e-12);
}

TEST(InitModel, SegmentMeansRecoverEarlySwitchGenerator) {
  // Left-to-right generator that leaves state 0 after about one frame, so
  // uniform halves of length-2 sequences are nearly pure.
  HmmModel gen = two_state_generator();
  gen.topology = build_topology(TopologyKind::LeftToRight, 2);
  gen.pi = Eigen::Vector2d(1.0, 0.0);
  gen.A << 0.1, 0.9, 0.0, 1.0;
  std::vector<FeatureSequence> seqs;
  for (std::uint64_t i = 0; i < 10; ++i) seqs.push_back(sample(gen, 2, 200 + i));
  const auto m = init_model(seqs, build_topology(TopologyKind::Ergodic, 2), EmissionKind::Gaussian, 1, 0);
  double a = m.emissions[0].gaussian().mean[0], b = m.emissions[1].gaussian().mean[0];
  if (a > b) std::swap(a, b);
  EXPECT_NEAR(a, 0.0, 1.0);
  EXPECT_NEAR(b, 5.0, 1.0);
}

TEST(InitModel, Errors) {
  const auto topo = build_topology(TopologyKind::Ergodic, 2);
  EXPECT_THROW(init_model({}, topo, EmissionKind::Gaussian, 1, 0), std::invalid_argument);
  EXPECT_THROW(init_model({make_seq({{1.0}}), make_seq({{1.0, 2.0}})}, topo, EmissionKind::Gaussian, 1, 0),
               std::invalid_argument);
}

TEST(LogForward, SingleStateTwoFrames) {
  const auto m = single_state(0.0, 1.0);
  EXPECT_NEAR(log_forward(m, make_seq({{0.0}, {0.0}})), -std::log(2.0 * std::numbers::pi), 1e-12);
}

TEST(LogForward, LeftToRightFirstFrame) {
  const auto m = reference_model(TopologyKind::LeftToRight);
  const auto seq = make_seq({{0.4, 0.3}});
  const std::span<const double> x(seq.frames.data(), 2);
  EXPECT_NEAR(log_forward(m, seq), gaussian_logpdf(m.emissions[0].gaussian(), x), 1e-12);
}

TEST(LogForward, FrozenReferenceValues) {
  // tests/oracles/brute_force.py
  EXPECT_NEAR(log_forward(reference_model(TopologyKind::Ergodic), reference_seq()), -12.972248607418980, 1e-10);
  EXPECT_NEAR(log_forward(reference_model(TopologyKind::LeftToRight), reference_seq()), -10.724090658387203, 1e-10);
}

TEST(LogForward, DimensionMismatch) {
  EXPECT_THROW(log_forward(single_state(0, 1), make_seq({{0.0, 1.0}})), std::invalid_argument);
}

TEST(Viterbi, FrozenReferenceValues) {
  for (auto kind : {TopologyKind::Ergodic, TopologyKind::LeftToRight}) {
    const auto r = viterbi_decode(reference_model(kind), reference_seq());
    EXPECT_EQ(r.path, (std::vector<int>{0, 1, 1, 2}));
    EXPECT_NEAR(r.log_joint, kind == TopologyKind::Ergodic ? -13.117695437209132 : -10.766320180045655, 1e-10);
    EXPECT_FALSE(r.degenerate);
  }
}

TEST(Viterbi, SingleStatePath) {
  const auto r = viterbi_decode(single_state(1.0, 2.0), make_seq({{0.0}, {3.0}, {-1.0}}));
  EXPECT_EQ(r.path, (std::vector<int>{0, 0, 0}));
}

TEST(Viterbi, EmissionsDominate) {
  HmmModel m;
  m.topology = build_topology(TopologyKind::Ergodic, 2);
  m.feature_dim = 1;
  m.pi = Eigen::Vector2d(0.5, 0.5);
  m.A = Eigen::Matrix2d::Constant(0.5);
  m.emissions.emplace_back(GaussianEmission{Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 0.01)});
  m.emissions.emplace_back(GaussianEmission{Eigen::VectorXd::Constant(1, 10.0), Eigen::VectorXd::Constant(1, 0.01)});
  EXPECT_EQ(viterbi_decode(m, make_seq({{0.0}, {10.0}, {0.0}})).path, (std::vector<int>{0, 1, 0}));
}

TEST(Viterbi, TiesGoToLowerState) {
  HmmModel m = single_state(0.0, 1.0);
  m.topology = build_topology(TopologyKind::Ergodic, 2);
  m.pi = Eigen::Vector2d(0.5, 0.5);
  m.A = Eigen::Matrix2d::Constant(0.5);
  m.emissions.push_back(m.emissions[0]);
  EXPECT_EQ(viterbi_decode(m, make_seq({{0.2}, {0.1}, {-0.3}})).path, (std::vector<int>{0, 0, 0}));
}

TEST(Viterbi, AllPathsImpossibleIsDegenerate) {
  // pi puts all mass on state 1, but 1 can only go to 1 and state 1's density underflows to 0.
  HmmModel m;
  m.topology = build_topology(TopologyKind::Ergodic, 2);
  m.feature_dim = 1;
  m.pi = Eigen::Vector2d(0.0, 1.0);
  m.A.resize(2, 2);
  m.A << 1.0, 0.0, 0.0, 1.0;
  m.emissions.emplace_back(GaussianEmission{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)});
  m.emissions.emplace_back(GaussianEmission{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 1e-3)});
  const auto seq = make_seq({{1e160}});
  const auto r = viterbi_decode(m, seq);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.log_joint, -INFINITY);
  EXPECT_EQ(r.path, std::vector<int>{0});
  EXPECT_EQ(log_forward(m, seq), -INFINITY);
}

// Property: forward and Viterbi agree with path enumeration; Viterbi <= forward;
// LTR paths are monotone with unit steps.
TEST(OracleEquivalence, RandomModels) {
  std::mt19937_64 rng(20261016);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 4);
    const int t_len = 1 + static_cast<int>(rng() % 6);
    const int d = 1 + static_cast<int>(rng() % 3);
    const auto kind = (rng() % 2) ? TopologyKind::Ergodic : TopologyKind::LeftToRight;
    const auto m = random_model(rng, n, d, kind, trial % 5 == 0);
    const auto seq = random_seq(rng, t_len, d);
    const auto bf = brute_force(m, seq);
    const double fwd = log_forward(m, seq);
    const auto vit = viterbi_decode(m, seq);
    ASSERT_NEAR(fwd, bf.log_total, 1e-8) << "trial " << trial;
    ASSERT_NEAR(vit.log_joint, bf.log_best, 1e-8) << "trial " << trial;
    ASSERT_NEAR(path_log_joint(m, seq, vit.path), bf.log_best, 1e-8);
    ASSERT_LE(vit.log_joint, fwd + 1e-9);
    if (kind == TopologyKind::LeftToRight) {
      ASSERT_EQ(vit.path[0], 0);
      for (std::size_t t = 1; t < vit.path.size(); ++t) {
        const int step = vit.path[t] - vit.path[t - 1];
        ASSERT_TRUE(step == 0 || step == 1);
      }
    }
  }
}

TEST(ViterbiTrain, MaxItersOneIsOnePass) {
  const auto gen = two_state_generator();
  std::vector<FeatureSequence> seqs{sample(gen, 20, 1), sample(gen, 25, 2)};
  auto init = init_model(seqs, build_topology(TopologyKind::Ergodic, 2), EmissionKind::Gaussian, 1, 0);
  const auto r = viterbi_train(init, seqs, 1, 1e-4);
  EXPECT_EQ(r.report.iterations, 1);
  EXPECT_EQ(r.report.objective_trace.size(), 1u);
  EXPECT_FALSE(r.report.converged);
}

TEST(ViterbiTrain, FixedPointConvergesAfterOneExtraIteration) {
  const auto gen = two_state_generator();
  std::vector<FeatureSequence> seqs;
  for (std::uint64_t i = 0; i < 5; ++i) seqs.push_back(sample(gen, 30, 40 + i));
  auto trained = viterbi_train(init_model(seqs, build_topology(TopologyKind::Ergodic, 2), EmissionKind::Gaussian, 1, 0),
                               seqs, 100, 1e-12);
  ASSERT_TRUE(trained.report.converged);
  // Retraining from the fixed point reproduces it.
  const auto again = viterbi_train(trained.model, seqs, 100, 1e-4);
  ASSERT_EQ(again.report.objective_trace.size(), 2u);
  EXPECT_EQ(again.report.objective_trace[0], again.report.objective_trace[1]);
  EXPECT_TRUE(again.report.converged);
  EXPECT_EQ(again.report.iterations, 2);
}

TEST(ViterbiTrain, RecoversTwoStateGenerator) {
  const auto gen = two_state_generator();
  std::vector<FeatureSequence> seqs;
  // Independent recovery oracle: empirical parameters from the true hidden paths.
  double sums[2] = {0, 0}, counts[2] = {0, 0}, stay[2] = {0, 0}, leave[2] = {0, 0};
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto s = sample_with_states(gen, 30, 1000 + i);
    for (std::size_t t = 0; t < s.states.size(); ++t) {
      const auto k = static_cast<std::size_t>(s.states[t]);
      sums[k] += s.sequence.frames(static_cast<Eigen::Index>(t), 0);
      counts[k] += 1;
      if (t + 1 < s.states.size()) (s.states[t + 1] == s.states[t] ? stay : leave)[k] += 1;
    }
    seqs.push_back(s.sequence);
  }
  ASSERT_NEAR(sums[0] / counts[0], 0.0, 0.3);
  ASSERT_NEAR(sums[1] / counts[1], 5.0, 0.3);
  ASSERT_NEAR(stay[0] / (stay[0] + leave[0]), 0.9, 0.1);

  const auto r = viterbi_train(init_model(seqs, build_topology(TopologyKind::Ergodic, 2), EmissionKind::Gaussian, 1, 0),
                               seqs, 100, 1e-4);
  const int lo = r.model.emissions[0].gaussian().mean[0] < r.model.emissions[1].gaussian().mean[0] ? 0 : 1;
  const int hi = 1 - lo;
  EXPECT_NEAR(r.model.emissions[static_cast<std::size_t>(lo)].gaussian().mean[0], 0.0, 0.3);
  EXPECT_NEAR(r.model.emissions[static_cast<std::size_t>(hi)].gaussian().mean[0], 5.0, 0.3);
  EXPECT_NEAR(r.model.A(lo, lo), 0.9, 0.1);
  EXPECT_NEAR(r.model.A(hi, hi), 0.9, 0.1);
}

TEST(ViterbiTrain, ObjectiveMonotoneAndStochastic) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const auto kind = seed % 2 ? TopologyKind::Ergodic : TopologyKind::LeftToRight;
    const auto gen = random_model(rng, 3, 2, TopologyKind::Ergodic);
    std::vector<FeatureSequence> seqs;
    for (std::uint64_t i = 0; i < 8; ++i) seqs.push_back(sample(gen, 15 + static_cast<int>(i), seed * 100 + i));
    const auto em = seed % 3 == 0 ? EmissionKind::Gmm : EmissionKind::Gaussian;
    auto r = viterbi_train(init_model(seqs, build_topology(kind, 4), em, 2, seed), seqs, 50, 1e-9);
    for (std::size_t k = 1; k < r.report.objective_trace.size(); ++k) {
      EXPECT_GE(r.report.objective_trace[k], r.report.objective_trace[k - 1] - 1e-6) << "seed " << seed << " iter " << k;
    }
    EXPECT_NO_THROW(validate_model(r.model));
  }
}

TEST(ViterbiTrain, RowStochasticAfterEveryIteration) {
  std::mt19937_64 rng(31);
  const auto gen = random_model(rng, 3, 2, TopologyKind::Ergodic);
  std::vector<FeatureSequence> seqs;
  for (std::uint64_t i = 0; i < 6; ++i) seqs.push_back(sample(gen, 20, 500 + i));
  for (auto kind : {TopologyKind::Ergodic, TopologyKind::LeftToRight}) {
    auto model = init_model(seqs, build_topology(kind, 4), EmissionKind::Gaussian, 1, 0);
    for (int iter = 0; iter < 8; ++iter) {
      model = viterbi_train(model, seqs, 1, 1e-4).model;
      for (int i = 0; i < 4; ++i) {
        EXPECT_NEAR(model.A.row(i).sum(), 1.0, 1e-9);
        for (int j = 0; j < 4; ++j) {
          if (!model.topology.mask(i, j)) {
            EXPECT_EQ(model.A(i, j), 0.0);
          }
        }
      }
      EXPECT_NEAR(model.pi.sum(), 1.0, 1e-9);
    }
  }
}

TEST(ViterbiTrain, EmptyStateKeepsEmissionAndIsFlagged) {
  HmmModel m;
  m.topology = build_topology(TopologyKind::Ergodic, 3);
  m.feature_dim = 1;
  m.pi = Eigen::Vector3d::Constant(1.0 / 3.0);
  m.A = Eigen::Matrix3d::Constant(1.0 / 3.0);
  m.emissions.emplace_back(GaussianEmission{Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Ones(1)});
  m.emissions.emplace_back(GaussianEmission{Eigen::VectorXd::Constant(1, 10.0), Eigen::VectorXd::Ones(1)});
  m.emissions.emplace_back(GaussianEmission{Eigen::VectorXd::Constant(1, 100.0), Eigen::VectorXd::Ones(1)});
  std::vector<FeatureSequence> seqs{make_seq({{0.0}, {0.1}, {0.2}, {10.0}, {10.1}, {10.2}})};
  const auto r = viterbi_train(m, seqs, 5, 1e-6);
  EXPECT_EQ(r.report.empty_states, std::vector<int>{2});
  EXPECT_EQ(r.model.emissions[2].gaussian().mean, m.emissions[2].gaussian().mean);
  EXPECT_EQ(r.model.emissions[2].gaussian().var, m.emissions[2].gaussian().var);
  EXPECT_NEAR(r.model.emissions[0].gaussian().mean[0], 0.1, 1e-12);
  EXPECT_NO_THROW(validate_model(r.model));
}

TEST(ViterbiTrain, Errors) {
  auto m = single_state(0.0, 1.0);
  std::vector<FeatureSequence> seqs{make_seq({{1.0}})};
  EXPECT_THROW(viterbi_train(m, seqs, 0, 1e-4), std::invalid_argument);
  EXPECT_THROW(viterbi_train(m, seqs, 1, 0.0), std::invalid_argument);
  EXPECT_THROW(viterbi_train(m, {}, 1, 1e-4), std::invalid_argument);
  EXPECT_THROW(viterbi_train(m, {make_seq({{1.0, 2.0}})}, 1, 1e-4), std::invalid_argument);
}

TEST(Sample, DegenerateVarianceStaysNearMean) {
  const auto s = sample(single_state(0.0, kVarianceFloor), 10, 3);
  // Within three standard deviations at the floor variance.
  EXPECT_LT(s.frames.cwiseAbs().maxCoeff(), 3.0 * std::sqrt(kVarianceFloor));
}

TEST(Sample, LeftToRightLengthOneUsesStateZero) {
  const auto m = reference_model(TopologyKind::LeftToRight);
  for (std::uint64_t seed = 0; seed < 20; ++seed) EXPECT_EQ(sample_with_states(m, 1, seed).states, std::vector<int>{0});
}

TEST(Sample, LawOfLargeNumbers) {
  const auto s = sample(single_state(2.0, 1.0), 10000, 77);
  EXPECT_NEAR(s.frames.mean(), 2.0, 0.05);
}

TEST(Sample, Deterministic) {
  const auto m = reference_model(TopologyKind::Ergodic);
  EXPECT_EQ(sample(m, 50, 9).frames, sample(m, 50, 9).frames);
  EXPECT_NE(sample(m, 50, 9).frames, sample(m, 50, 10).frames);
  EXPECT_THROW(sample(m, 0, 1), std::invalid_argument);
}

TEST(ModelJson, RoundTripIsBitExact) {
  std::mt19937_64 rng(4);
  const auto m = random_model(rng, 3, 2, TopologyKind::LeftToRight, true);
  const auto text = to_json(m).dump();
  const auto back = hmm_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back.A, m.A);
  EXPECT_EQ(back.pi, m.pi);
  EXPECT_EQ(to_json(back).dump(), text);
  EXPECT_EQ(to_json(m)["kind"], "left_to_right");
}

TEST(ModelJson, RejectsMaskViolation) {
  auto j = to_json(reference_model(TopologyKind::LeftToRight));
  j["A"][0][2] = 0.1;
  j["A"][0][0] = 0.5;
  EXPECT_THROW(hmm_from_json(j), std::invalid_argument);
}

}  // namespace
}  // namespace signhmm
