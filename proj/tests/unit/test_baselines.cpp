#include <gtest/gtest.h>

#include "asbf/baselines.hpp"
#include "asbf/errors.hpp"
#include "oracles.hpp"

using namespace asbf;

namespace {

Dataset tiny(std::size_t n, int n_t = 6, int n_r = 2, std::uint64_t seed = 5) {
  ChannelModelConfig cfg;
  cfg.seed = seed;
  return generate_dataset(cfg, n_r, n_t, n);
}

}  // namespace

TEST(Exhaustive, SearchSpaceCount) {
  EXPECT_EQ(exhaustive_search_size({6, 2, 2, 1, 2, 10.0, 1}), 240.0);
  EXPECT_EQ(exhaustive_search_size({8, 3, 2, 1, 2, 10.0, 1}), 56.0 * 64);
}

TEST(Exhaustive, GuardReportsSize) {
  const SystemConfig big{64, 8, 4, 1, 2, 10.0, 1};
  try {
    exhaustive_joint_search(oracle::random_complex(2, 64, 1), big);
    FAIL() << "expected SearchSpaceError";
  } catch (const SearchSpaceError& e) {
    EXPECT_NE(std::string(e.what()).find("e+"), std::string::npos) << e.what();
  }
}

TEST(Exhaustive, FeasibleAndBounded) {
  const SystemConfig cfg{6, 3, 2, 1, 2, 10.0, 1};
  for (const auto& h : tiny(10).samples) {
    const BaselineResult r = exhaustive_joint_search(h, cfg);
    EXPECT_TRUE(r.selection.orthonormal());
    const double amp = 1 / std::sqrt(3.0);
    for (Eigen::Index i = 0; i < r.beamformer.t_rf.size(); ++i)
      EXPECT_EQ(std::abs(r.beamformer.t_rf(i).real()), amp);
    EXPECT_NEAR((r.beamformer.t_rf * r.beamformer.t_bb).squaredNorm(), 1.0, 1e-9);
    EXPECT_LE(r.rate, full_digital(h, 1, 10.0).rate + 1e-9);
  }
}

TEST(Exhaustive, DominatesBaselines) {
  const SystemConfig cfg{6, 3, 2, 2, 2, 10.0, 1};
  Rng rng(2);
  for (const auto& h : tiny(20).samples) {
    const double ex = exhaustive_joint_search(h, cfg).rate;
    EXPECT_LE(gas_cdm(h, cfg).rate, ex + 1e-9);
    EXPECT_LE(ras_cdm(h, cfg, rng).rate, ex + 1e-9);
  }
}

TEST(Greedy, PicksStrongestColumnFirstAndBreaksTiesLow) {
  ChannelMatrix h = ChannelMatrix::Zero(2, 4);
  h(0, 2) = 3.0;
  h(1, 0) = 1.0;
  h(1, 3) = 1.0;
  const SelectionMatrix a = greedy_antenna_selection(h, {4, 2, 2, 2, 2, 10.0, 1});
  EXPECT_EQ(a.indices, (std::vector<int>{2, 0}));
  const ChannelMatrix flat = ChannelMatrix::Ones(2, 4);
  EXPECT_EQ(greedy_antenna_selection(flat, {4, 2, 2, 1, 2, 10.0, 1}).indices, (std::vector<int>{0, 1}));
}

TEST(Greedy, CustomRateAndCount) {
  const ChannelMatrix h = oracle::random_complex(2, 5, 3);
  int calls = 0;
  const SubsetRate columns_first = [&](const ChannelMatrix& hs, const SystemConfig&) {
    ++calls;
    return -hs.col(hs.cols() - 1).norm();
  };
  const auto a = greedy_antenna_selection(h, {5, 3, 2, 1, 2, 10.0, 1}, columns_first, 2);
  EXPECT_EQ(a.indices.size(), 2U);
  EXPECT_EQ(calls, 5 + 4);
}

TEST(RandomSelection, DistinctAndSeeded) {
  const SystemConfig cfg{8, 3, 2, 1, 2, 10.0, 1};
  Rng a(9), b(9);
  for (int i = 0; i < 20; ++i) {
    const auto s = random_antenna_selection(cfg, a);
    EXPECT_TRUE(s.orthonormal());
    EXPECT_EQ(s.indices, random_antenna_selection(cfg, b).indices);
  }
}

TEST(Cdm, ObjectiveNonIncreasingAndFeasible) {
  const SystemConfig cfg{6, 4, 2, 2, 2, 10.0, 1};
  for (const auto& h : tiny(10).samples) {
    const ChannelMatrix h_s = select_columns(h, SelectionMatrix{6, {0, 1, 3, 5}});
    const CdmResult r = cdm_altmin(h_s, cfg);
    for (std::size_t i = 1; i < r.objective.size(); ++i) EXPECT_LE(r.objective[i], r.objective[i - 1] + 1e-12);
    EXPECT_NEAR((r.beamformer.t_rf * r.beamformer.t_bb).squaredNorm(), 2.0, 1e-10);
    for (Eigen::Index i = 0; i < r.beamformer.t_rf.size(); ++i) EXPECT_EQ(r.beamformer.t_rf(i).imag(), 0.0);
  }
  EXPECT_THROW(cdm_altmin(oracle::random_complex(2, 1, 1), cfg), ContractError);
}

TEST(References, TagsAndShapes) {
  const SystemConfig cfg{6, 3, 2, 1, 2, 10.0, 1};
  const ChannelMatrix h = tiny(1).samples[0];
  const auto fa = full_array_reference(h, cfg);
  EXPECT_EQ(fa.algorithm, "full-array");
  EXPECT_EQ(fa.selection.indices.size(), 6U);
  EXPECT_EQ(fa.beamformer.t_rf.rows(), 6);
  const auto sw = switch_based_reference(h, cfg);
  EXPECT_EQ(sw.algorithm, "switch-based");
  EXPECT_EQ(sw.selection.indices.size(), 2U);
  EXPECT_NEAR((sw.beamformer.t_rf * sw.beamformer.t_bb).squaredNorm(), 1.0, 1e-10);
  Rng rng(1);
  EXPECT_EQ(gas_cdm(h, cfg).algorithm, "gas+cdm");
  EXPECT_EQ(ras_cdm(h, cfg, rng).algorithm, "ras+cdm");
  EXPECT_GE(gas_cdm(h, cfg).elapsed_s, 0.0);
}
