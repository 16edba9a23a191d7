#include <gtest/gtest.h>

#include <numbers>

#include "asbf/autodiff/ops.hpp"
#include "asbf/errors.hpp"
#include "asbf/mimo.hpp"
#include "oracles.hpp"

using namespace asbf;
using std::numbers::pi;

TEST(Selection, DenseAndOrthonormal) {
  const SelectionMatrix a{5, {3, 0}};
  const Eigen::MatrixXd d = a.dense();
  EXPECT_EQ(d.rows(), 5);
  EXPECT_EQ(d(3, 0), 1.0);
  EXPECT_EQ(d(0, 1), 1.0);
  EXPECT_TRUE((d.transpose() * d).isIdentity(0.0));
  EXPECT_TRUE(a.orthonormal());
  EXPECT_FALSE((SelectionMatrix{5, {1, 1}}.orthonormal()));
}

TEST(Rate, MatchesDeterminantOracle) {
  const ChannelMatrix h = oracle::random_complex(2, 6, 3);
  const SelectionMatrix a{6, {1, 4, 5}};
  const Eigen::MatrixXcd t_rf = oracle::random_complex(3, 2, 4);
  const Eigen::MatrixXcd t_bb = normalize_digital(t_rf, oracle::random_complex(2, 2, 5), 2);
  const SystemConfig cfg{6, 3, 2, 2, 2, 3.0, 1};
  EXPECT_NEAR(achieved_rate(h, a, t_rf, t_bb, cfg), oracle::rate(select_columns(h, a) * t_rf * t_bb, 3.0, 2), 1e-10);
  EXPECT_NEAR(achieved_rate(h, a.dense(), t_rf, t_bb, cfg), achieved_rate(h, a, t_rf, t_bb, cfg), 1e-12);
}

TEST(Rate, StrictlyIncreasingInSnr) {
  const ChannelMatrix h = oracle::random_complex(2, 4, 9);
  const Eigen::MatrixXcd t_rf = analog_from_phases(Eigen::MatrixXd::Constant(4, 2, 0.3), {});
  Eigen::MatrixXcd t_rf2 = t_rf;
  t_rf2(1, 1) *= -1.0;
  const Eigen::MatrixXcd t_bb = normalize_digital(t_rf2, oracle::random_complex(2, 1, 2), 1);
  double prev = -1;
  for (double snr : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    const double r = achieved_rate(h, SelectionMatrix{4, {0, 1, 2, 3}}, t_rf2, t_bb, {4, 4, 2, 1, 2, snr, 1});
    EXPECT_GT(r, prev);
    prev = r;
  }
}

TEST(Rate, DimensionMismatch) {
  const SystemConfig cfg{6, 2, 2, 1, 2, 10.0, 1};
  EXPECT_THROW(achieved_rate(oracle::random_complex(2, 6, 1), SelectionMatrix{6, {0, 1}}, oracle::random_complex(3, 2, 2),
                             oracle::random_complex(2, 1, 3), cfg),
               std::invalid_argument);
}

TEST(Quantizer, HardValues) {
  EXPECT_EQ(quantize_phase(0.0), 0.0);
  EXPECT_EQ(quantize_phase(0.99 * pi), 0.0);
  EXPECT_EQ(quantize_phase(pi), pi);
  EXPECT_EQ(quantize_phase(2 * pi), pi);
  EXPECT_THROW(quantize_phase(-0.1), ContractError);
  EXPECT_THROW(quantize_phase(7.0), ContractError);
}

TEST(Quantizer, SoftBranches) {
  EXPECT_NEAR(soft_quantize_phase(0.6 * pi, 0.01), 0.0, 1e-6);
  EXPECT_DOUBLE_EQ(soft_quantize_phase(pi, 0.01), pi / 2);
  EXPECT_DOUBLE_EQ(soft_quantize_phase(0.0, 0.01), -pi / 2);
  double worst = 0;
  for (int i = 0; i <= 1000; ++i) {
    const double t = 0.1 * pi + 0.8 * pi * i / 1000.0;
    worst = std::max({worst, std::abs(soft_quantize_phase(t, 0.01) - quantize_phase(t)),
                      std::abs(soft_quantize_phase(t + pi, 0.01) - quantize_phase(t + pi))});
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Quantizer, SoftTapeMatchesScalarAndGradient) {
  ad::Tape tape;
  const std::vector<double> th{0.3, 1.2, 3.0, 3.3, 4.5, 6.1};
  const ad::Tensor y = soft_quantize_phase(tape.constant({6}, th), 0.5);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(y.data()[i], soft_quantize_phase(th[i], 0.5), 1e-14);
  const oracle::ScalarFn f = [](ad::Tape&, const std::vector<ad::Tensor>& x) {
    return ad::sum(ad::square(soft_quantize_phase(x[0], 0.5)));
  };
  EXPECT_LT(oracle::gradient_error(f, {{{6}, th}}), 1e-7);
}

TEST(Analog, HardEntriesExact) {
  Eigen::MatrixXd ph(3, 2);
  ph << 0.1, 4.0, 3.2, 1.0, 6.2, 2.9;
  const Eigen::MatrixXcd t = analog_from_phases(ph, {0.01, QuantizerMode::Hard});
  const double amp = 1.0 / std::sqrt(3.0);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    EXPECT_TRUE(t(i).real() == amp || t(i).real() == -amp);
    EXPECT_EQ(t(i).imag(), 0.0);
  }
  const Eigen::MatrixXcd s = analog_from_phases(ph, {1e-4, QuantizerMode::Soft});
  for (Eigen::Index i = 0; i < s.size(); ++i) EXPECT_NEAR(std::abs(s(i)), amp, 1e-15);
  EXPECT_LT((s - t).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Normalize, ConstraintAndInvariances) {
  const Eigen::MatrixXcd t_rf = oracle::random_complex(4, 2, 1);
  const Eigen::MatrixXcd raw = oracle::random_complex(2, 2, 2);
  const Eigen::MatrixXcd t_bb = normalize_digital(t_rf, raw, 2);
  EXPECT_NEAR((t_rf * t_bb).squaredNorm(), 2.0, 1e-12);
  EXPECT_LT((normalize_digital(t_rf, 7.0 * raw, 2) - t_bb).norm(), 1e-12);
  EXPECT_LT((normalize_digital(t_rf, t_bb, 2) - t_bb).norm(), 1e-12);
  EXPECT_THROW(normalize_digital(t_rf, Eigen::MatrixXcd::Zero(2, 2), 2), DegenerateInputError);
}

TEST(WaterFilling, Examples) {
  Eigen::VectorXd eq = Eigen::VectorXd::Constant(3, 1.5);
  const Eigen::VectorXd p = water_filling<double>(eq, 2.0, 1.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p(i), 2.0 / 3, 1e-12);
  Eigen::VectorXd strong(3);
  strong << 10.0, 0.1, 0.05;
  const Eigen::VectorXd q = water_filling<double>(strong, 0.5, 1.0);
  EXPECT_NEAR(q(0), 0.5, 1e-12);
  EXPECT_EQ(q(1), 0.0);
  EXPECT_THROW(water_filling<double>(Eigen::VectorXd::Zero(2), 1.0, 1.0), DegenerateInputError);
  Eigen::VectorXd unsorted(2);
  unsorted << 1.0, 2.0;
  EXPECT_THROW(water_filling<double>(unsorted, 1.0, 1.0), ContractError);
}

TEST(WaterFilling, TwoModeGridSearch) {
  Eigen::VectorXd g(2);
  g << 2.0, 1.0;
  const Eigen::VectorXd p = water_filling<double>(g, 1.0, 1.0);
  // closed form: mu = (1 + 1/4 + 1) / 2
  EXPECT_NEAR(p(0), 1.125 - 0.25, 1e-12);
  EXPECT_NEAR(p(1), 1.125 - 1.0, 1e-12);
  double best = -1, best_p = 0;
  for (int i = 0; i <= 1000000; ++i) {
    const double p0 = i / 1e6;
    Eigen::VectorXd t(2);
    t << p0, 1 - p0;
    const double v = oracle::wf_objective(g, t, 1.0);
    if (v > best) best = v, best_p = p0;
  }
  EXPECT_NEAR(best_p, p(0), 1e-6);
  EXPECT_GE(oracle::wf_objective(g, p, 1.0), best - 1e-12);
}

TEST(WaterFilling, LongDoubleInstantiation) {
  Eigen::Matrix<long double, Eigen::Dynamic, 1> g(2);
  g << 2.0L, 1.0L;
  const auto p = water_filling<long double>(g, 1.0L, 1.0L);
  EXPECT_NEAR(static_cast<double>(p(0)), 0.875, 1e-15);
}

TEST(FullDigital, MatchesBestPrecoderAndPadsStreams) {
  const ChannelMatrix h = oracle::random_complex(2, 5, 8);
  const DigitalSolution s = full_digital(h, 2, 4.0);
  EXPECT_NEAR(s.precoder.squaredNorm(), 2.0, 1e-10);
  EXPECT_NEAR(s.rate, oracle::rate(h * s.precoder, 4.0, 2), 1e-10);
  const DigitalSolution padded = full_digital(h, 3, 4.0);
  EXPECT_EQ(padded.precoder.cols(), 3);
  EXPECT_NEAR(padded.rate, oracle::rate(h * padded.precoder, 4.0, 3), 1e-10);
}

TEST(OptimalDigital, OrthogonalAnalogReducesToSvd) {
  const ChannelMatrix h_s = oracle::random_complex(2, 2, 4);
  const Eigen::MatrixXcd t_rf = Eigen::MatrixXcd::Identity(2, 2) / std::sqrt(2.0);
  const SystemConfig cfg{2, 2, 2, 1, 2, 10.0, 1};
  const auto r = optimal_digital_beamformer(h_s * t_rf, t_rf, cfg);
  EXPECT_FALSE(r.pseudo_inverse);
  EXPECT_NEAR((t_rf * r.t_bb).squaredNorm(), 1.0, 1e-12);
  EXPECT_NEAR(oracle::rate(h_s * t_rf * r.t_bb, 10.0, 1), full_digital(h_s, 1, 10.0).rate, 1e-10);
}

TEST(OptimalDigital, BeatsRandomFeasibleDigital) {
  const ChannelMatrix h = oracle::random_complex(2, 6, 12);
  const SelectionMatrix a{6, {0, 2, 5}};
  Eigen::MatrixXd ph(3, 2);
  ph << 0, 4, 4, 0, 4, 4;
  const Eigen::MatrixXcd t_rf = analog_from_phases(ph, {});
  const SystemConfig cfg{6, 3, 2, 2, 2, 5.0, 1};
  const Eigen::MatrixXcd h_eff = select_columns(h, a) * t_rf;
  const double best = achieved_rate(h, a, t_rf, optimal_digital_beamformer(h_eff, t_rf, cfg).t_bb, cfg);
  EXPECT_LE(best, full_digital(select_columns(h, a), 2, 5.0).rate + 1e-9);
  for (int i = 0; i < 10000; ++i) {
    const Eigen::MatrixXcd t_bb = normalize_digital(t_rf, oracle::random_complex(2, 2, 1000 + i), 2);
    ASSERT_LE(achieved_rate(h, a, t_rf, t_bb, cfg), best + 1e-9);
  }
}

TEST(OptimalDigital, SingularGramFallsBack) {
  Eigen::MatrixXcd t_rf(2, 2);
  const double amp = 1 / std::sqrt(2.0);
  t_rf << amp, amp, -amp, -amp;
  const ChannelMatrix h_s = oracle::random_complex(2, 2, 3);
  const auto r = optimal_digital_beamformer(h_s * t_rf, t_rf, {2, 2, 2, 1, 2, 10.0, 1});
  EXPECT_TRUE(r.pseudo_inverse);
  EXPECT_NEAR((t_rf * r.t_bb).squaredNorm(), 1.0, 1e-10);
}

TEST(HardSelect, Examples) {
  Eigen::MatrixXd phi(2, 4);
  phi << 0, 5, 1, 0,  //
      0, 0, 1, 3;
  EXPECT_EQ(hard_select(phi).indices, (std::vector<int>{1, 3}));
  phi << 0, 5, 1, 0,  //
      0, 4, 1, 0;
  EXPECT_EQ(hard_select(phi).indices, (std::vector<int>{1, 2}));
  phi.setZero();
  EXPECT_EQ(hard_select(phi).indices, (std::vector<int>{0, 1}));
  Rng rng(3);
  for (int i = 0; i < 50; ++i) EXPECT_TRUE(hard_select(phi, true, rng).orthonormal());
}

TEST(RelaxedSelect, UniformSharpAndNormalized) {
  const Eigen::MatrixXd u = relaxed_select(Eigen::MatrixXd::Zero(2, 5), 1.0);
  EXPECT_EQ(u.rows(), 5);
  EXPECT_TRUE(u.isConstant(0.2, 1e-15));
  Eigen::MatrixXd phi(1, 3);
  phi << 0, 1, 0;
  EXPECT_GT(relaxed_select(phi, 0.01).maxCoeff(), 0.99);
  EXPECT_THROW(relaxed_select(phi, 0.0), ContractError);
  Rng rng(4);
  const Eigen::MatrixXd r = oracle::random_complex(3, 7, 5).real();
  const Eigen::MatrixXd g = sample_gumbel(3, 7, rng);
  const Eigen::MatrixXd a = relaxed_select(r, 0.7, &g);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(a.col(j).sum(), 1.0, 1e-9);
  EXPECT_GE(a.minCoeff(), 0.0);
}

TEST(RelaxedSelect, ArgmaxLimitMatchesHard) {
  Eigen::MatrixXd phi(3, 6);
  phi << 0.1, 0.9, 0.3, 0.2, 0.0, 0.5,  //
      0.7, 0.2, 0.1, 0.4, 0.8, 0.0,     //
      0.3, 0.6, 0.2, 0.9, 0.1, 0.4;
  const Eigen::MatrixXd a = relaxed_select(phi, 1e-4);
  const SelectionMatrix h = hard_select(phi);
  for (Eigen::Index j = 0; j < 3; ++j) {
    Eigen::Index k;
    a.col(j).maxCoeff(&k);
    EXPECT_EQ(k, h.indices[j]);
  }
}

TEST(Probabilities, Examples) {
  Eigen::VectorXd phi(4);
  phi << std::log(1.0), std::log(2.0), std::log(3.0), std::log(4.0);
  const Eigen::VectorXd p = logits_to_probabilities(phi);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(p(i), 0.1 * (i + 1), 1e-15);
  EXPECT_LT((logits_to_probabilities((phi.array() + 3.0).matrix()) - p).norm(), 1e-15);
}

TEST(TapeRate, MatchesEigenAndGradient) {
  ad::Tape tape;
  const ChannelMatrix h = oracle::random_complex(2, 6, 2);
  const SelectionMatrix a{6, {1, 3}};
  const Eigen::MatrixXcd t_rf = analog_from_phases(Eigen::MatrixXd::Constant(2, 2, 0.2), {});
  Eigen::MatrixXcd t_rf2 = t_rf;
  t_rf2(0, 1) *= -1.0;
  const Eigen::MatrixXcd t_bb = normalize_digital(t_rf2, oracle::random_complex(2, 1, 9), 1);
  const SystemConfig cfg{6, 2, 2, 1, 2, 10.0, 1};
  const ad::Tensor r = achieved_rate(to_complex_tensor(tape, h), to_tensor(tape, Eigen::MatrixXd(a.dense())),
                                     to_complex_tensor(tape, t_rf2), to_complex_tensor(tape, t_bb), cfg);
  EXPECT_NEAR(r.item(), achieved_rate(h, a, t_rf2, t_bb, cfg), 1e-12);

  const oracle::ScalarFn f = [](ad::Tape&, const std::vector<ad::Tensor>& x) {
    return rate_from_effective(ad::ComplexPair{x[0], x[1]}, 3.0, 2);
  };
  EXPECT_LT(oracle::gradient_error(f, {oracle::random_input({2, 2}, 1), oracle::random_input({2, 2}, 2)}), 1e-7);
}

TEST(TapeNormalize, MatchesEigen) {
  ad::Tape tape;
  const Eigen::MatrixXcd t_rf = oracle::random_complex(3, 2, 1), raw = oracle::random_complex(2, 2, 2);
  const auto n = normalize_digital(to_complex_tensor(tape, t_rf), to_complex_tensor(tape, raw), 2);
  EXPECT_LT((to_complex_matrix(n) - normalize_digital(t_rf, raw, 2)).norm(), 1e-13);
}
