#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dcir/consistency.hpp"
#include "oracles.hpp"

using namespace dcir;

namespace {

std::vector<AgentNets> make_actors(std::size_t n, std::size_t obs, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<AgentNets> a;
  for (std::size_t i = 0; i < n; ++i) a.push_back(AgentNets::create(obs, {6}, 1e-3, rng));
  return a;
}

}  // namespace

TEST(Kl, IdentityAndHalfBit) {
  const Vec p{0.2, 0.3, 0.5};
  EXPECT_EQ(kl_consistency(p, p), 0.0);
  EXPECT_NEAR(kl_consistency(Vec{1.0, 0.0}, Vec{0.5, 0.5}), std::numbers::ln2, 1e-6);
  EXPECT_THROW(kl_consistency(Vec{1.0}, Vec{0.5, 0.5}), ShapeError);
}

TEST(Kl, DirectionIsFixed) {
  const Vec u_ij{0.9, 0.1}, u_i{0.5, 0.5};
  const double forward = kl_consistency(u_ij, u_i);
  const double swapped = kl_consistency(u_i, u_ij);
  EXPECT_NEAR(forward, 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5), 1e-15);
  EXPECT_GT(std::abs(forward - swapped), 1e-3);
}

TEST(Js, IdentityDisjointAndSymmetry) {
  const Vec p{0.1, 0.9};
  EXPECT_EQ(js_consistency(p, p), 0.0);
  EXPECT_NEAR(js_consistency(Vec{1.0, 0.0}, Vec{0.0, 1.0}), std::numbers::ln2, 1e-6);
  Rng rng(1);
  for (int t = 0; t < 1000; ++t) {
    const Vec a = oracle::random_dist(rng, 5), b = oracle::random_dist(rng, 5);
    EXPECT_NEAR(js_consistency(a, b), js_consistency(b, a), 1e-12);
  }
}

TEST(Tv, IdentityDisjointAndBound) {
  const Vec p{0.25, 0.75};
  EXPECT_EQ(tv_consistency(p, p), 0.0);
  EXPECT_EQ(tv_consistency(Vec{1.0, 0.0}, Vec{0.0, 1.0}), 2.0);
  EXPECT_EQ(tv_consistency(Vec{1.0, 0.0}, Vec{0.0, 1.0}, true), 1.0);
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    const double v = tv_consistency(oracle::random_dist(rng, 5), oracle::random_dist(rng, 5));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 2.0 + 1e-12);
  }
}

TEST(Binary, SameActionAndTieBreak) {
  const Vec p{0.2, 0.8};
  EXPECT_EQ(binary_consistency(p, p), 1.0);
  EXPECT_EQ(binary_consistency(Vec{0.9, 0.1}, Vec{0.1, 0.9}), -1.0);
  EXPECT_EQ(binary_consistency(Vec{0.5, 0.5}, Vec{0.6, 0.4}), 1.0);
}

TEST(Divergences, FuzzedRanges) {
  Rng rng(3);
  for (int t = 0; t < 10000; ++t) {
    const Vec p = oracle::random_dist(rng, 5, t % 3 == 0), q = oracle::random_dist(rng, 5, t % 5 == 0);
    EXPECT_GE(kl_consistency(p, q), 0.0);
    const double j = js_consistency(p, q);
    EXPECT_GE(j, 0.0);
    EXPECT_LE(j, std::numbers::ln2 + 1e-12);
    const double b = binary_consistency(p, q);
    EXPECT_TRUE(b == 1.0 || b == -1.0);
    EXPECT_EQ(kl_consistency(p, p), 0.0);
    EXPECT_EQ(js_consistency(p, p), 0.0);
    EXPECT_EQ(tv_consistency(p, p), 0.0);
    EXPECT_EQ(binary_consistency(p, p), 1.0);
  }
}

TEST(CrossDistributions, SharedParametersGiveOwnDistribution) {
  auto actors = make_actors(3, 4, 5);
  actors[1].actor = actors[0].actor;
  actors[2].actor = actors[0].actor;
  const Vec o{0.3, -0.1, 0.7, 0.2};
  const Vec own = action_distribution(actors[0], o);
  const auto cross = cross_distributions(actors, o, 0);
  ASSERT_EQ(cross.size(), 2u);
  for (const auto& [j, d] : cross) EXPECT_EQ(d, own);
}

TEST(CrossDistributions, ZeroActorsAreUniform) {
  auto actors = make_actors(3, 4, 6);
  for (auto& a : actors) std::fill(a.actor.begin(), a.actor.end(), 0.0);
  for (const auto& [j, d] : cross_distributions(actors, Vec{1, 2, 3, 4}, 1))
    for (double p : d) EXPECT_DOUBLE_EQ(p, 0.2);
}

TEST(CrossDistributions, RiggedSingleLayerActors) {
  // Agent 1: logits = W o with W row k = (k, 0); agent 2: zero weights, bias (0, ln 3, 0, 0, 0).
  Rng rng(7);
  std::vector<AgentNets> actors;
  for (int i = 0; i < 3; ++i) actors.push_back(AgentNets::create(2, {}, 1e-3, rng));
  std::fill(actors[1].actor.begin(), actors[1].actor.end(), 0.0);
  for (std::size_t k = 0; k < 5; ++k) actors[1].actor[k * 2] = static_cast<double>(k);
  std::fill(actors[2].actor.begin(), actors[2].actor.end(), 0.0);
  actors[2].actor[10 + 1] = std::log(3.0);
  const Vec o{0.5, 9.0};
  const auto cross = cross_distributions(actors, o, 0);
  // agent 1 logits = (0, 0.5, 1, 1.5, 2)
  double z = 0.0;
  for (int k = 0; k < 5; ++k) z += std::exp(0.5 * k);
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(cross.at(1)[k], std::exp(0.5 * k) / z, 1e-15);
  // agent 2: (1, 3, 1, 1, 1) / 7
  EXPECT_NEAR(cross.at(2)[1], 3.0 / 7.0, 1e-15);
  EXPECT_NEAR(cross.at(2)[0], 1.0 / 7.0, 1e-15);
}

TEST(CrossDistributions, RejectsDifferentLayouts) {
  Rng rng(8);
  std::vector<AgentNets> actors{AgentNets::create(4, {6}, 1e-3, rng), AgentNets::create(5, {6}, 1e-3, rng)};
  EXPECT_THROW(cross_distributions(actors, Vec{1, 2, 3, 4}, 0), ShapeError);
}

TEST(ConsistencyVector, IdenticalActorsScoreZero) {
  auto actors = make_actors(3, 4, 9);
  actors[1].actor = actors[0].actor;
  actors[2].actor = actors[0].actor;
  const auto c = consistency_vector({DivergenceKind::kl}, actors, Vec{0.1, 0.2, 0.3, 0.4}, 0);
  ASSERT_EQ(c.scores.size(), 2u);
  for (const auto& [j, s] : c.scores) EXPECT_EQ(s, 0.0);
}

TEST(ConsistencyVector, CardinalityAndCompositionBitExact) {
  Rng rng(10);
  for (int t = 0; t < 50; ++t) {
    const auto actors = make_actors(4, 3, 100 + t);
    const Vec o{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const std::size_t i = rng.below(4);
    for (auto kind : {DivergenceKind::kl, DivergenceKind::js, DivergenceKind::tv, DivergenceKind::binary}) {
      const DivergenceOptions opt{kind};
      const auto c = consistency_vector(opt, actors, o, i);
      ASSERT_EQ(c.scores.size(), 3u);
      EXPECT_EQ(c.scores.count(i), 0u);
      const Vec own = action_distribution(actors[i], o);
      for (const auto& [j, s] : c.scores) EXPECT_EQ(s, divergence(opt, action_distribution(actors[j], o), own));
    }
  }
}
