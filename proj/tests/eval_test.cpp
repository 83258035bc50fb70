#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "srlprobe/eval/span.hpp"

namespace srlprobe::eval {
namespace {

TEST(DecodeSpan, PeaksInsideContext) {
  std::vector<double> s(12, 0.0), e(12, 0.0);
  s[8] = 5;
  e[9] = 5;
  std::vector<std::uint8_t> m(12, 0);
  for (int i = 5; i < 12; ++i) m[i] = 1;
  auto span = decode_span<double>(s, e, m);
  EXPECT_EQ(span, (TokenSpan{8, 9}));
}

TEST(DecodeSpan, InvertedPairFallsBackToNextBest) {
  std::vector<double> s = {0, 0, 0, 5, 0}, e = {0, 4, 0, 0, 1};
  std::vector<std::uint8_t> m(5, 1);
  EXPECT_EQ(decode_span<double>(s, e, m), (TokenSpan{3, 4}));
}

TEST(DecodeSpan, MaskAndLengthRespected) {
  std::vector<double> s = {9, 0, 0, 0, 0, 0}, e = {0, 0, 0, 0, 0, 9};
  std::vector<std::uint8_t> m = {0, 1, 1, 1, 1, 1};
  auto span = decode_span<double>(s, e, m, 2);
  EXPECT_GE(span.start, 1);
  EXPECT_LE(span.end - span.start, 1);
  EXPECT_EQ(span, (TokenSpan{4, 5}));
}

TEST(DecodeSpan, TiesGoToSmallestIndices) {
  std::vector<double> s(6, 1.0), e(6, 1.0);
  std::vector<std::uint8_t> m = {0, 0, 1, 1, 1, 1};
  EXPECT_EQ(decode_span<double>(s, e, m), (TokenSpan{2, 2}));
}

TEST(DecodeSpan, EmptyMaskRejected) {
  std::vector<double> s(3, 0.0);
  std::vector<std::uint8_t> m(3, 0);
  EXPECT_THROW(decode_span<double>(s, s, m), ValidationError);
}

TEST(DecodeSpan, MatchesExhaustivePairSearch) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 20;
    std::vector<double> s(n), e(n);
    for (int i = 0; i < n; ++i) {
      // Coarse values make exact ties common.
      s[i] = std::round(nd(rng) * 2);
      e[i] = std::round(nd(rng) * 2);
    }
    std::vector<std::uint8_t> m(n, 0);
    const int begin = static_cast<int>(rng() % 10);
    for (int i = begin; i < n; ++i) m[i] = (rng() % 5) != 0;
    m[n - 1] = 1;
    const int max_len = 1 + static_cast<int>(rng() % 8);
    ASSERT_EQ(decode_span<double>(s, e, m, max_len), testing::brute_force_span(s, e, m, max_len)) << trial;
  }
}

TEST(TokenF1, ForcedArithmetic) {
  auto same = token_f1({3, 5}, {3, 5});
  EXPECT_DOUBLE_EQ(same.f1, 1.0);
  auto half = token_f1({5, 6}, {6, 7});
  EXPECT_DOUBLE_EQ(half.precision, 0.5);
  EXPECT_DOUBLE_EQ(half.recall, 0.5);
  EXPECT_DOUBLE_EQ(half.f1, 0.5);
  auto none = token_f1({1, 2}, {4, 6});
  EXPECT_EQ(none.f1, 0.0);
  EXPECT_EQ(none.precision, 0.0);
}

TEST(TokenF1, SymmetryOnlyForEqualLengths) {
  auto a = token_f1({2, 4}, {3, 5});
  auto b = token_f1({3, 5}, {2, 4});
  EXPECT_DOUBLE_EQ(a.f1, b.f1);
  EXPECT_DOUBLE_EQ(a.precision, b.recall);
  auto c = token_f1({2, 2}, {2, 5});
  auto d = token_f1({2, 5}, {2, 2});
  EXPECT_NE(c.precision, d.precision);
  EXPECT_DOUBLE_EQ(c.f1, d.f1);
}

data::EncodedExample example_with_role(data::CollapsedRole r, int a, int b) {
  data::EncodedExample ex;
  ex.role = r;
  ex.answer_start = a;
  ex.answer_end = b;
  return ex;
}

TEST(Aggregate, OverallIsRoleWeightedMeanAndAbsentRolesStayAbsent) {
  using data::CollapsedRole;
  std::vector<data::EncodedExample> xs = {example_with_role(CollapsedRole::Arg0Agent, 1, 2),
                                          example_with_role(CollapsedRole::Arg0Agent, 1, 2),
                                          example_with_role(CollapsedRole::ArgmTmp, 1, 1),
                                          example_with_role(CollapsedRole::Unknown, 4, 5)};
  std::vector<ExampleScore> scores = {{{1, 2}, token_f1({1, 2}, {1, 2})},
                                      {{2, 3}, token_f1({2, 3}, {1, 2})},
                                      {{1, 1}, token_f1({1, 1}, {1, 1})},
                                      {{0, 0}, token_f1({0, 0}, {4, 5})}};
  auto r = aggregate_scores(scores, xs, true);
  EXPECT_EQ(r.n_examples, 4u);
  EXPECT_NEAR(r.f1, (1.0 + 0.5 + 1.0 + 0.0) / 4, 1e-12);
  EXPECT_FALSE(r.role_f1(CollapsedRole::ArgmLoc).has_value());
  EXPECT_NEAR(*r.role_f1(CollapsedRole::Arg0Agent), 0.75, 1e-12);
  double weighted = 0;
  std::size_t named = 0;
  for (const auto& [role, s] : r.per_role) {
    weighted += s.f1 * static_cast<double>(s.n);
    if (role != CollapsedRole::Unknown) named += s.n;
  }
  EXPECT_NEAR(weighted / 4, r.f1, 1e-9);
  EXPECT_LE(named, r.n_examples);
  auto back = F1Report::from_json(r.to_json());
  EXPECT_EQ(back.per_role.size(), r.per_role.size());
  EXPECT_DOUBLE_EQ(back.f1, r.f1);
}

TEST(Aggregate, SingleExampleAndEmpty) {
  std::vector<data::EncodedExample> xs = {example_with_role(data::CollapsedRole::ArgmLoc, 2, 3)};
  auto r = aggregate_scores({{{3, 3}, token_f1({3, 3}, {2, 3})}}, xs, true);
  EXPECT_NEAR(r.f1, token_f1({3, 3}, {2, 3}).f1, 1e-15);
  EXPECT_THROW(aggregate_scores({}, {}, true), ValidationError);
}

}  // namespace
}  // namespace srlprobe::eval
