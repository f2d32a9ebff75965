#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "qcs/channel.hpp"
#include "qcs/error.hpp"
#include "qcs/stats.hpp"

namespace {

using namespace qcs;

TEST(Channel, AdditiveDelay) {
  RandomStream rng(1, streams::channel);
  const auto t = deliver(ChannelModel{3.0, 0.0, 0.0}, 5.0, rng);
  ASSERT_TRUE(t.has_value());
  EXPECT_DOUBLE_EQ(*t, 8.0);
}

TEST(Channel, TotalLoss) {
  RandomStream rng(2, streams::channel);
  for (int i = 0; i < 100; ++i) EXPECT_FALSE(deliver(ChannelModel{1.0, 0.5, 1.0}, 0.0, rng));
}

TEST(Channel, JitterIsTruncatedAtSendTime) {
  RandomStream rng(3, streams::channel);
  const ChannelModel ch{0.1, 10.0, 0.0};
  int clipped = 0;
  for (int i = 0; i < 10000; ++i) {
    const double t = *deliver(ch, 2.0, rng);
    ASSERT_GE(t, 2.0);
    if (t == 2.0) ++clipped;
  }
  EXPECT_GT(clipped, 4000);  // about half the draws fall below zero delay
}

TEST(Channel, LossRateMatchesProbability) {
  RandomStream rng(4, streams::channel);
  int lost = 0;
  for (int i = 0; i < 20000; ++i) lost += deliver(ChannelModel{0.0, 0.0, 0.25}, 0.0, rng) ? 0 : 1;
  EXPECT_NEAR(lost / 20000.0, 0.25, 5 * std::sqrt(0.25 * 0.75 / 20000.0));
}

TEST(Channel, ValidateRejectsBadModels) {
  EXPECT_THROW((ChannelModel{-1.0, 0.0, 0.0}.validate()), Error);
  EXPECT_THROW((ChannelModel{0.0, -1.0, 0.0}.validate()), Error);
  EXPECT_THROW((ChannelModel{0.0, 0.0, 1.5}.validate()), Error);
  RandomStream rng(5);
  EXPECT_THROW(deliver(ChannelModel{}, std::nan(""), rng), Error);
}

TEST(Medium, ExactLightSecond) {
  const MediumModel m{299792458.0, 1.0, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(m.transit_time(1.0), 1.0);
  EXPECT_THROW((MediumModel{1.0, 0.9, 0.0, 0.0}.validate()), Error);
  EXPECT_THROW((MediumModel{1.0, 1.0, -0.1, 0.0}.validate()), Error);
  EXPECT_THROW((MediumModel{0.0, 1.0, 0.0, 0.0}.validate()), Error);
}

TEST(Medium, AsChannelUsesMeanTransit) {
  const MediumModel m{299792458.0, 1.5, 1e-3, 0.0};
  const ChannelModel ch = m.as_channel(0.1);
  EXPECT_DOUBLE_EQ(ch.base_delay, 1.5);
  EXPECT_DOUBLE_EQ(ch.jitter_sigma, 1e-3);
  EXPECT_DOUBLE_EQ(ch.loss_probability, 0.1);
}

TEST(EinsteinSync, SymmetricLegsCancel) {
  RandomStream rng(6, streams::medium);
  for (double d : {1.0, 1e3, 1e7}) {
    const auto r = einstein_sync(MediumModel{d, 1.0003, 0.0, 0.0}, rng);
    EXPECT_EQ(r.error, 0.0);
    EXPECT_EQ(r.estimated_offset, r.true_offset);
  }
  const auto shifted = einstein_sync(MediumModel{1e3, 1.0, 0.0, 0.0}, rng, 0.125);
  EXPECT_EQ(shifted.error, 0.0);
  EXPECT_DOUBLE_EQ(shifted.error, shifted.estimated_offset - shifted.true_offset);
}

TEST(EinsteinSync, ErrorMatchesLegAsymmetry) {
  // error = d (n_out - n_back) / (2c); its spread is d sigma / (sqrt(2) c).
  const double d = 1e6, sigma = 1e-5;
  RandomStream rng(7, streams::medium);
  std::vector<double> errs;
  for (int i = 0; i < 20000; ++i) errs.push_back(einstein_sync(MediumModel{d, 1.0, sigma, 0.0}, rng).error);
  const double expected = d * sigma / (std::sqrt(2.0) * kSpeedOfLight);
  EXPECT_NEAR(stddev(errs), expected, 0.03 * expected);
  EXPECT_NEAR(mean(errs), 0.0, 5 * expected / std::sqrt(20000.0));
}

TEST(Stats, KsDetectsShiftAndAcceptsSame) {
  std::mt19937_64 g(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> a(500), b(500), c(500);
  for (auto& x : a) x = n(g);
  for (auto& x : b) x = n(g);
  for (auto& x : c) x = n(g) + 0.5;
  EXPECT_GT(ks_two_sample(a, b).p_value, 0.05);
  EXPECT_LT(ks_two_sample(a, c).p_value, 1e-6);
  EXPECT_DOUBLE_EQ(ks_two_sample(a, a).statistic, 0.0);
  EXPECT_DOUBLE_EQ(ks_two_sample(a, a).p_value, 1.0);
}

TEST(Stats, KsStatisticMatchesBruteForce) {
  std::mt19937_64 g(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> a(37), b(53);
  for (auto& x : a) x = u(g);
  for (auto& x : b) x = u(g) * 1.2;
  double d = 0.0;
  std::vector<double> all(a);
  all.insert(all.end(), b.begin(), b.end());
  for (double x : all) {
    const double fa = std::count_if(a.begin(), a.end(), [&](double v) { return v <= x; }) / 37.0;
    const double fb = std::count_if(b.begin(), b.end(), [&](double v) { return v <= x; }) / 53.0;
    d = std::max(d, std::abs(fa - fb));
  }
  EXPECT_DOUBLE_EQ(ks_two_sample(a, b).statistic, d);
}

TEST(Stats, Moments) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(mean(v), 2.5);
  EXPECT_DOUBLE_EQ(stddev(v), std::sqrt(5.0 / 3.0));
  EXPECT_DOUBLE_EQ(rms(v), std::sqrt(7.5));
}

}  // namespace
