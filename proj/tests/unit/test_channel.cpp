#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>
#include <set>

#include "asbf/channel.hpp"
#include "asbf/errors.hpp"

using namespace asbf;

namespace {

std::string tmp(const char* name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

TEST(Steering, SpecialAngles) {
  for (const auto& v : {steering_vector(5, 0.0, 1.3), steering_vector(5, 0.7, std::numbers::pi / 2)})
    for (Eigen::Index k = 0; k < 5; ++k) EXPECT_NEAR(std::abs(v(k) - std::complex<double>(1, 0)), 0.0, 1e-12);
  const auto v = steering_vector(4, std::numbers::pi / 6, 0.0);
  for (Eigen::Index k = 0; k < 4; ++k) EXPECT_NEAR(std::abs(v(k) - std::complex<double>(k % 2 ? -1 : 1, 0)), 0.0, 1e-12);
}

TEST(Channel, SinglePathUnitModulus) {
  PathParams p;
  const ChannelMatrix h = synthesize_channel({p}, 3, 4, 100e6);
  for (Eigen::Index i = 0; i < h.size(); ++i) EXPECT_NEAR(std::abs(h(i)), 1.0, 1e-12);
}

TEST(Channel, FrobeniusNormalization) {
  ChannelModelConfig cfg;
  Rng rng(3);
  for (int i = 0; i < 50; ++i) EXPECT_NEAR(generate_channel(cfg, 2, 8, rng).squaredNorm(), 16.0, 1e-10);
}

TEST(Channel, RankBoundedByPaths) {
  ChannelModelConfig cfg;
  cfg.n_paths = 5;
  cfg.seed = 7;
  const Dataset d = generate_dataset(cfg, 4, 8, 20);
  for (const auto& h : d.samples) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(h);
    const auto s = svd.singularValues();
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) rank += s(i) > 1e-9 * s(0);
    EXPECT_LE(rank, 5);
  }
  cfg.n_paths = 2;
  for (const auto& h : generate_dataset(cfg, 4, 8, 5).samples) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(h);
    EXPECT_LT(svd.singularValues()(2), 1e-9 * svd.singularValues()(0));
  }
}

TEST(Channel, InvalidConfig) {
  ChannelModelConfig cfg;
  cfg.n_paths = 0;
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg = {};
  cfg.max_delay_s = -1;
  EXPECT_THROW(cfg.validate(), ContractError);
}

TEST(Dataset, DeterministicAndOrderIndependent) {
  ChannelModelConfig cfg;
  cfg.seed = 11;
  const Dataset a = generate_dataset(cfg, 2, 6, 10);
  const Dataset b = generate_dataset(cfg, 2, 6, 10);
  const Dataset prefix = generate_dataset(cfg, 2, 6, 4);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.samples[i], b.samples[i]);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(prefix.samples[i], a.samples[i]);
  cfg.seed = 12;
  EXPECT_NE(generate_dataset(cfg, 2, 6, 1).samples[0], a.samples[0]);
  EXPECT_NE(sample_seed(1, 0), sample_seed(1, 1));
  EXPECT_NE(sample_seed(1, 0), sample_seed(2, 0));
}

TEST(Csi, ZeroNmseIsIdentity) {
  Rng rng(1);
  ChannelModelConfig cfg;
  const ChannelMatrix h = generate_channel(cfg, 2, 6, rng);
  EXPECT_EQ(perturb_csi(h, 0.0, rng), h);
  EXPECT_THROW(perturb_csi(h, -0.1, rng), ContractError);
}

TEST(Csi, EmpiricalNmse) {
  ChannelModelConfig cfg;
  const Dataset d = generate_dataset(cfg, 2, 8, 1000);
  Rng rng(5);
  double err = 0, pow = 0;
  for (const auto& h : d.samples) {
    err += (perturb_csi(h, 0.1, rng) - h).squaredNorm();
    pow += h.squaredNorm();
  }
  EXPECT_GE(err / pow, 0.09);
  EXPECT_LE(err / pow, 0.11);
}

TEST(Csi, PerturbedChannelStaysNormalized) {
  Rng rng(2);
  ChannelModelConfig cfg;
  const ChannelMatrix h = generate_channel(cfg, 2, 6, rng);
  EXPECT_NEAR(perturb_csi(h, 0.5, rng).squaredNorm(), 12.0, 1e-10);
}

TEST(Mch1, RoundTrip) {
  ChannelModelConfig cfg;
  const Dataset d = generate_dataset(cfg, 3, 5, 10);
  const auto path = tmp("asbf_test.mch");
  write_dataset(path, d);
  const Dataset r = read_dataset(path);
  ASSERT_EQ(r.size(), 10U);
  EXPECT_EQ(r.n_r, 3);
  EXPECT_EQ(r.n_t, 5);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(r.samples[i], d.samples[i]);
  std::filesystem::remove(path);
}

TEST(Mch1, EmptyDataset) {
  const Dataset d{2, 4, {}};
  const Dataset r = decode_dataset(encode_dataset(d));
  EXPECT_EQ(r.size(), 0U);
  EXPECT_EQ(r.n_t, 4);
}

TEST(Mch1, TruncatedAndBadMagic) {
  ChannelModelConfig cfg;
  auto bytes = encode_dataset(generate_dataset(cfg, 2, 2, 3));
  auto t = bytes;
  t.resize(t.size() - 8);
  try {
    decode_dataset(t);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
  }
  bytes[1] = 'Z';
  EXPECT_THROW(decode_dataset(bytes), FormatError);
  EXPECT_THROW(read_dataset(tmp("asbf_missing_file.mch")), std::exception);
}

TEST(Split, DisjointAndComplete) {
  ChannelModelConfig cfg;
  const Dataset d = generate_dataset(cfg, 2, 4, 25);
  const DatasetSplit s = split_dataset(d, 0.8, 3);
  EXPECT_EQ(s.train.size(), 20U);
  EXPECT_EQ(s.test.size(), 5U);
  std::set<std::size_t> all(s.train_indices.begin(), s.train_indices.end());
  for (auto i : s.test_indices) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 25U);
  EXPECT_EQ(s.train.samples[0], d.samples[s.train_indices[0]]);
}
