#include <gtest/gtest.h>

#include <cmath>

#include "planted.hpp"
#include "srlprobe/neurons/io.hpp"

namespace srlprobe::neurons {
namespace {

using testing::planted_set;
using R = CollapsedRole;

TEST(SelectNeurons, SinglePlantedUnitRecovered) {
  auto set = planted_set(1, 400, 32, {{7, R::ArgmTmp}});
  auto sel = select_neurons(set, 0);
  ASSERT_FALSE(sel.empty());
  EXPECT_EQ(sel[0].unit, 7);
  EXPECT_EQ(sel[0].role, R::ArgmTmp);
  EXPECT_LT(sel[0].p_value, 1e-4);
}

TEST(SelectNeurons, TwoPlantedUnitsWithRoles) {
  auto set = planted_set(2, 400, 32, {{3, R::Arg0Agent}, {20, R::ArgmLoc}});
  auto sel = select_neurons(set, 0);
  std::map<int, R> got;
  for (const auto& n : sel) got[n.unit] = n.role;
  ASSERT_TRUE(got.count(3) && got.count(20));
  EXPECT_EQ(got[3], R::Arg0Agent);
  EXPECT_EQ(got[20], R::ArgmLoc);
}

TEST(SelectNeurons, PrecisionOverTwentySeeds) {
  const std::map<int, R> planted = {{2, R::Arg0Agent}, {9, R::Arg1Theme}, {17, R::ArgmLoc}, {30, R::ArgmTmp}};
  int hits = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto sel = select_neurons(planted_set(100 + seed, 400, 64, planted), 0);
    for (const auto& n : sel) {
      ++total;
      auto it = planted.find(n.unit);
      hits += (it != planted.end() && it->second == n.role) ? 1 : 0;
    }
  }
  ASSERT_GT(total, 0);
  EXPECT_GE(static_cast<double>(hits) / total, 0.9);
}

TEST(SelectNeurons, IdenticalRolesGiveEmptySelection) {
  auto set = planted_set(3, 200, 16, {});
  EXPECT_TRUE(select_neurons(set, 0).empty());
}

TEST(SelectNeurons, InvariantsAndDeterminism) {
  std::map<int, R> planted;
  for (int j = 0; j < 40; ++j) planted[j] = testing::kPlantedRoles[static_cast<std::size_t>(j) % 4];
  auto set = planted_set(4, 400, 64, planted, 5.0, 0.5);
  auto a = select_neurons(set, 0);
  auto b = select_neurons(set, 0);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_LE(a.size(), 20u);
  std::map<int, int> per_pc;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].unit, b[i].unit);
    EXPECT_LT(a[i].p_value, 1e-4);
    if (i > 0) {
      EXPECT_GE(a[i - 1].loading, a[i].loading);
    }
    per_pc[a[i].component] += 1;
  }
  for (const auto& [c, k] : per_pc) EXPECT_LE(k, 5);
}

TEST(SelectNeurons, Preconditions) {
  auto set = planted_set(5, 40, 8, {{1, R::ArgmTmp}});
  EXPECT_THROW(select_neurons(set, 1), ValidationError);
  auto one_role = set;
  std::fill(one_role.roles.begin(), one_role.roles.end(), R::Arg0Agent);
  EXPECT_THROW(select_neurons(one_role, 0), ValidationError);
  auto flat = set;
  flat.layers[0].setConstant(0.3);
  EXPECT_THROW(select_neurons(flat, 0), UndefinedError);
}

TEST(Pca, SignConventionAndOrder) {
  auto set = planted_set(6, 200, 8, {{4, R::Arg1Theme}});
  auto p = pca(set.layers[0], 32);
  for (Eigen::Index c = 0; c < p.components.cols(); ++c) {
    Eigen::Index arg = 0;
    p.components.col(c).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(p.components(arg, c), 0.0);
    if (c > 0) {
      EXPECT_GE(p.eigenvalues[c - 1], p.eigenvalues[c]);
    }
  }
}

TEST(Anova, MatchesHandComputation) {
  // Groups {1,2,3}, {4,5,6}: SSB = 13.5, SSW = 4, F = 13.5 / (4/4) = 13.5.
  Eigen::VectorXd v(6);
  v << 1, 2, 3, 4, 5, 6;
  auto a = one_way_anova(v, {0, 0, 0, 1, 1, 1}, 2);
  EXPECT_NEAR(a.f, 13.5, 1e-12);
  // scipy.stats.f.sf(13.5, 1, 4)
  EXPECT_NEAR(a.p, 0.021311641128756723, 1e-12);
}

TEST(Selectivity, ForcedArithmetic) {
  RoleActivationSet set;
  set.layers.assign(1, MatD::Zero(100, 2));
  for (int i = 0; i < 100; ++i) {
    set.roles.push_back(i < 10 ? R::ArgmTmp : R::Arg0Agent);
    set.layers[0](i, 0) = i < 10 ? 4.0 : 0.0;
    set.layers[0](i, 1) = 2.5;
  }
  EXPECT_NEAR(selectivity_ratio(set, 0, 0, R::ArgmTmp), 10.0, 1e-12);
  EXPECT_NEAR(selectivity_ratio(set, 0, 1, R::ArgmTmp), 1.0, 1e-12);
  auto scaled = set;
  scaled.layers[0] *= 3.25;
  EXPECT_NEAR(selectivity_ratio(scaled, 0, 0, R::ArgmTmp), selectivity_ratio(set, 0, 0, R::ArgmTmp), 1e-12);
  EXPECT_THROW(selectivity_ratio(set, 0, 0, R::ArgmLoc), ValidationError);
  set.layers[0].col(1).setZero();
  EXPECT_THROW(selectivity_ratio(set, 0, 1, R::ArgmTmp), UndefinedError);
}

TEST(Selectivity, Planted40x) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto set = testing::selectivity40_set(seed);
    EXPECT_NEAR(selectivity_ratio(set, 0, 0, R::ArgmTmp), 40.0, 2.0);
  }
}

TEST(Pearson, Cases) {
  Eigen::VectorXd a(5), b(5);
  a << 1.0, 2.5, -0.5, 4.0, 3.0;
  b << 0.3, 1.1, 0.2, 2.9, 1.7;
  // Direct formula evaluated in long double.
  long double ma = 0, mb = 0;
  for (int i = 0; i < 5; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= 5;
  mb /= 5;
  long double sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < 5; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  EXPECT_NEAR(*pearson(a, b), static_cast<double>(sab / std::sqrt(saa * sbb)), 1e-12);
  EXPECT_NEAR(*pearson(a, a), 1.0, 1e-12);
  EXPECT_NEAR(*pearson(a, -a), -1.0, 1e-12);
  EXPECT_FALSE(pearson(a, Eigen::VectorXd::Constant(5, 2.0)).has_value());
}

TEST(Coactivation, PartitionExhaustsPairs) {
  auto set = planted_set(7, 200, 8, {{0, R::Arg0Agent}, {1, R::Arg0Agent}, {2, R::ArgmTmp}});
  set.layers[0].col(3).setConstant(1.0);
  std::vector<SelectedNeuron> sel = {
      {0, 0, 0, 0.7, 0, 0, R::Arg0Agent},
      {0, 1, 0, 0.7, 0, 0, R::Arg0Agent},
      {0, 2, 1, 0.9, 0, 0, R::ArgmTmp},
      {0, 3, 2, 0.5, 0, 0, R::ArgmTmp},
  };
  auto rep = coactivation(set, sel);
  ASSERT_EQ(rep.size(), 1u);
  const auto& l = rep[0];
  EXPECT_EQ(l.total, 6u);
  EXPECT_EQ(l.skipped, 3u);
  EXPECT_EQ(l.within.pairs + l.across.pairs + l.skipped, l.total);
  EXPECT_GT(*l.delta(), 0.5);

  set.layers[0].col(1) = set.layers[0].col(0);
  EXPECT_NEAR(coactivation(set, sel)[0].within.mean, 1.0, 1e-12);

  std::vector<SelectedNeuron> same = {sel[0], sel[1]};
  EXPECT_THROW(coactivation(set, same), ValidationError);
}

TEST(PowerLaw, RecoversNoiselessParameters) {
  const double alpha = 0.29, beta = 1.31;
  const int L = 8;
  std::vector<std::optional<double>> d;
  for (int l = 1; l <= L; ++l) d.push_back(alpha * std::pow(static_cast<double>(l) / L, beta));
  auto f = powerlaw_fit(d);
  EXPECT_NEAR(f.alpha, alpha, 1e-6);
  EXPECT_NEAR(f.beta, beta, 1e-6);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
  EXPECT_EQ(f.used, 8u);
  EXPECT_EQ(f.excluded, 0u);
}

TEST(PowerLaw, ConstantExclusionsAndErrors) {
  auto f = powerlaw_fit({0.2, 0.2, 0.2, 0.2});
  EXPECT_NEAR(f.beta, 0.0, 1e-12);
  EXPECT_NEAR(f.alpha, 0.2, 1e-12);
  auto g = powerlaw_fit({-0.1, 0.1, std::nullopt, 0.3, 0.4, 0.0});
  EXPECT_EQ(g.used, 3u);
  EXPECT_EQ(g.excluded, 3u);
  EXPECT_THROW(powerlaw_fit({0.5}), ValidationError);
  EXPECT_THROW(powerlaw_fit({0.5, -1.0, 0.2}), ValidationError);
}

}  // namespace
}  // namespace srlprobe::neurons

namespace srlprobe::neurons {
namespace {

TEST(SelectionFile, RoundTripAndCoactivationFromFile) {
  auto set = planted_set(8, 120, 16, {{0, R::Arg0Agent}, {1, R::Arg0Agent}, {5, R::ArgmTmp}});
  auto sel = select_neurons(set, 0);
  auto file = make_selection_file(set, sel);
  auto back = selection_from_json(ojson::parse(to_json(file).dump()));
  ASSERT_EQ(back.neurons.size(), sel.size());
  for (std::size_t i = 0; i < sel.size(); ++i) {
    EXPECT_EQ(back.neurons[i].unit, sel[i].unit);
    EXPECT_EQ(back.neurons[i].role, sel[i].role);
    EXPECT_TRUE(back.activations[i] == file.activations[i]);
  }
  auto direct = coactivation(set, sel);
  auto via_file = coactivation(back);
  EXPECT_EQ(coactivation_csv(direct), coactivation_csv(via_file));
  EXPECT_EQ(selection_mask(sel).neurons.size(), sel.size());
  EXPECT_THROW(selection_from_json(ojson::parse(R"({"roles":["nope"],"neurons":[]})")), ValidationError);
}

}  // namespace
}  // namespace srlprobe::neurons
