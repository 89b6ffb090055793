#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "swarm/lp.hpp"

using namespace swarm;

namespace {

struct Instance {
  std::vector<double> z;
  std::vector<double> c;
};

Instance random_instance(std::mt19937_64& rng, std::size_t m, double spread) {
  std::uniform_real_distribution<double> ux(-spread, spread), uc(-1.0, 1.0);
  Instance in;
  for (std::size_t k = 0; k < m; ++k) in.z.push_back(ux(rng));
  std::sort(in.z.begin(), in.z.end());
  in.z.erase(std::unique(in.z.begin(), in.z.end()), in.z.end());
  for (std::size_t k = 0; k < in.z.size(); ++k) in.c.push_back(uc(rng));
  return in;
}

}  // namespace

TEST(Lp1D, SimpleCases) {
  const std::vector<double> z{0.0, 1.0};
  EXPECT_DOUBLE_EQ(lp::bounded_lipschitz_1d(z, std::vector<double>{1.0, -1.0}), 1.0);
  const std::vector<double> far{0.0, 3.0};
  EXPECT_DOUBLE_EQ(lp::bounded_lipschitz_1d(far, std::vector<double>{1.0, -1.0}), 2.0);
  EXPECT_DOUBLE_EQ(lp::bounded_lipschitz_1d(far, std::vector<double>{0.5, 0.5}), 1.0);
  EXPECT_DOUBLE_EQ(lp::bounded_lipschitz_1d(std::vector<double>{}, std::vector<double>{}), 0.0);
  EXPECT_DOUBLE_EQ(lp::bounded_lipschitz_1d(std::vector<double>{2.0}, std::vector<double>{-0.3}),
                   0.3);
}

TEST(Lp1D, MatchesBruteForce) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 60; ++trial) {
    const auto in = random_instance(rng, 2 + trial % 4, trial % 2 ? 0.6 : 3.0);
    const double dp = lp::bounded_lipschitz_1d(in.z, in.c);
    const double bf = oracle::brute_force_bl(
        [&](std::size_t i, std::size_t j) { return std::abs(in.z[i] - in.z[j]); }, in.c);
    EXPECT_NEAR(dp, bf, 1e-9) << "trial " << trial;
  }
}

TEST(LpPairwise, MatchesDynamicProgramIn1D) {
  std::mt19937_64 rng(202);
  for (int trial = 0; trial < 200; ++trial) {
    const auto in = random_instance(rng, 2 + trial % 30, trial % 3 == 0 ? 0.3 : 4.0);
    const double dp = lp::bounded_lipschitz_1d(in.z, in.c);
    const auto sx = lp::bounded_lipschitz_pairwise(
        in.z.size(), [&](std::size_t i, std::size_t j) { return std::abs(in.z[i] - in.z[j]); },
        in.c);
    EXPECT_NEAR(dp, sx.value, 1e-9) << "trial " << trial;
    EXPECT_LE(sx.duality_gap, 1e-9);
    EXPECT_LE(sx.infeasibility, 1e-9);
  }
}

TEST(LpPairwise, MatchesBruteForceIn2D) {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> ux(-1.5, 1.5), uc(-1.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 2 + trial % 4;
    std::vector<Vec<2>> p(m);
    std::vector<double> c(m);
    for (std::size_t k = 0; k < m; ++k) {
      p[k] = {ux(rng), ux(rng)};
      c[k] = uc(rng);
    }
    const auto dist = [&](std::size_t i, std::size_t j) { return norm(p[i] - p[j]); };
    const auto sx = lp::bounded_lipschitz_pairwise(m, dist, c);
    EXPECT_NEAR(sx.value, oracle::brute_force_bl(dist, c), 1e-9) << "trial " << trial;
  }
}

TEST(LpPairwise, PhiIsFeasibleAndOptimal) {
  std::mt19937_64 rng(404);
  const auto in = random_instance(rng, 40, 2.0);
  const auto sx = lp::bounded_lipschitz_pairwise(
      in.z.size(), [&](std::size_t i, std::size_t j) { return std::abs(in.z[i] - in.z[j]); }, in.c);
  double obj = 0.0;
  for (std::size_t i = 0; i < in.z.size(); ++i) {
    EXPECT_LE(std::abs(sx.phi[i]), 1.0 + 1e-12);
    obj += in.c[i] * sx.phi[i];
    for (std::size_t j = 0; j < in.z.size(); ++j) {
      EXPECT_LE(sx.phi[i] - sx.phi[j], std::abs(in.z[i] - in.z[j]) + 1e-12);
    }
  }
  EXPECT_NEAR(obj, sx.value, 1e-12);
}

TEST(LpPairwise, RejectsLengthMismatch) {
  EXPECT_THROW(lp::bounded_lipschitz_pairwise(
                   3, [](std::size_t, std::size_t) { return 1.0; }, std::vector<double>{1.0}),
               InvalidArgument);
}
