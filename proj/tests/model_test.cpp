#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "reference_model.hpp"
#include "srlprobe/model/ablation_mask.hpp"
#include "srlprobe/model/checkpoint.hpp"
#include "srlprobe/model/config.hpp"
#include "srlprobe/model/loss.hpp"
#include "srlprobe/model/params.hpp"
#include "srlprobe/model/transformer.hpp"
#include "test_util.hpp"

namespace srlprobe::model {
namespace {

ModelConfig tiny_test_config() { return ModelConfig{1, 8, 2, 4, 11, 16, 0.0f, true}; }

PackedBatch random_batch(std::mt19937_64& rng, int vocab, int sequences, int max_len) {
  PackedBatch b;
  std::uniform_int_distribution<int> tok(0, vocab - 1), len(1, max_len);
  for (int s = 0; s < sequences; ++s) {
    std::vector<int> seq(static_cast<std::size_t>(len(rng)));
    for (auto& t : seq) t = tok(rng);
    b.add(seq);
  }
  return b;
}

TEST(CountParams, TablePresets) {
  struct Row {
    const char* name;
    std::int64_t transformer;
    double total_m;
  };
  const Row rows[] = {{"tiny", 396800, 4.4}, {"small", 3159552, 11.1}, {"base", 18915328, 34.8}, {"medium", 56704512, 80.5}};
  for (const auto& r : rows) {
    auto c = count_params(find_preset(r.name).model);
    EXPECT_EQ(c.transformer, r.transformer) << r.name;
    EXPECT_NEAR(static_cast<double>(c.total) / 1e6, r.total_m, 0.1) << r.name;
  }
  EXPECT_EQ(count_params(find_preset("tiny").model).total, 4369152);
}

TEST(CountParams, ZeroLayersIsFinalNormOnly) {
  ModelConfig c{0, 32, 4, 4, 50, 8, 0.0f, true};
  EXPECT_EQ(count_params(c).transformer, 64);
}

TEST(CountParams, MatchesAllocatedScalars) {
  for (const auto& preset : scale_presets()) {
    auto p = TransformerParams<float>::zeros(preset.model);
    auto audit = audit_params(p);
    auto closed = count_params(preset.model);
    EXPECT_EQ(audit.transformer, closed.transformer) << preset.name;
    EXPECT_EQ(audit.total, closed.total) << preset.name;
    EXPECT_EQ(audit.qa_head, closed.qa_head) << preset.name;
  }
}

TEST(Config, Validation) {
  ModelConfig c = tiny_test_config();
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_test_config();
  c.ff_mult = 2;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_THROW(find_preset("huge"), ValidationError);
  try {
    find_preset("huge");
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("tiny, small, base, medium"), std::string::npos);
  }
}

TEST(InitParams, DeterministicPerSeed) {
  auto c = tiny_test_config();
  auto a = init_params<float>(c, 9);
  auto b = init_params<float>(c, 9);
  auto d = init_params<float>(c, 10);
  EXPECT_TRUE(bit_identical(a, b));
  EXPECT_FALSE(bit_identical(a, d));
  for (const auto& L : a.layers) {
    EXPECT_TRUE((L.ln1_g.array() == 1.0f).all());
    EXPECT_TRUE((L.ln2_g.array() == 1.0f).all());
    EXPECT_TRUE((L.b1.array() == 0.0f).all());
  }
  EXPECT_TRUE((a.lnf_g.array() == 1.0f).all());
}

TEST(Forward, FiniteLogitsAtInit) {
  ModelConfig c{2, 16, 2, 4, 40, 32, 0.0f, true};
  auto p = init_params<float>(c, 1);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto b = random_batch(rng, c.vocab, 2, c.max_seq);
    auto out = forward(p, b);
    ASSERT_TRUE(out.lm_logits.allFinite());
    ASSERT_TRUE(out.qa_start.allFinite());
  }
}

TEST(Forward, MatchesReferenceImplementation) {
  ModelConfig c{2, 8, 2, 4, 13, 16, 0.0f, true};
  auto p = init_params<double>(c, 5);
  testing::jitter(p, 6, 0.3);
  std::vector<int> ids = {3, 1, 4, 1, 5, 9, 2, 6};
  PackedBatch b;
  b.add(ids);
  auto out = forward(p, b);
  auto ref = testing::reference_forward(p, ids);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    for (int v = 0; v < c.vocab; ++v) ASSERT_NEAR(out.lm_logits(static_cast<Eigen::Index>(t), v), ref.lm_logits[t][static_cast<std::size_t>(v)], 1e-10);
    ASSERT_NEAR(out.qa_start[static_cast<Eigen::Index>(t)], ref.start[t], 1e-10);
    ASSERT_NEAR(out.qa_end[static_cast<Eigen::Index>(t)], ref.end[t], 1e-10);
  }
}

TEST(Forward, CausalityFloat) {
  ModelConfig c{2, 16, 4, 4, 30, 20, 0.0f, true};
  auto p = init_params<float>(c, 2);
  testing::jitter(p, 3, 0.2);
  std::vector<int> a = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<int> b = a;
  for (std::size_t i = 6; i < b.size(); ++i) b[i] = 29 - b[i];
  PackedBatch ba, bb;
  ba.add(a);
  bb.add(b);
  auto oa = forward(p, ba), ob = forward(p, bb);
  double max_diff = (oa.lm_logits.topRows(6) - ob.lm_logits.topRows(6)).cwiseAbs().maxCoeff();
  EXPECT_LT(max_diff, 1e-6);
  EXPECT_LT((oa.qa_start.head(6) - ob.qa_start.head(6)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_GT((oa.lm_logits.row(8) - ob.lm_logits.row(8)).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Forward, CausalityExactInDouble) {
  ModelConfig c{1, 8, 2, 4, 11, 16, 0.0f, true};
  auto p = init_params<double>(c, 2);
  testing::jitter(p, 4, 0.3);
  PackedBatch ba, bb;
  ba.add(std::vector<int>{1, 2, 3, 4});
  bb.add(std::vector<int>{1, 2, 9, 10});
  auto oa = forward(p, ba), ob = forward(p, bb);
  EXPECT_EQ((oa.lm_logits.topRows(2) - ob.lm_logits.topRows(2)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Forward, SingleTokenAndSoftmaxNormalization) {
  auto c = tiny_test_config();
  auto p = init_params<float>(c, 1);
  PackedBatch b;
  b.add(std::vector<int>{4});
  auto out = forward(p, b);
  EXPECT_EQ(out.qa_start.size(), 1);
  EXPECT_EQ(out.qa_end.size(), 1);
  PackedBatch b2;
  b2.add(std::vector<int>{1, 2, 3, 4, 5});
  auto o2 = forward(p, b2);
  for (Eigen::Index t = 0; t < o2.lm_logits.rows(); ++t) {
    double mx = o2.lm_logits.row(t).maxCoeff();
    double sum = 0;
    for (Eigen::Index v = 0; v < o2.lm_logits.cols(); ++v) sum += std::exp(double(o2.lm_logits(t, v)) - mx);
    double total = 0;
    for (Eigen::Index v = 0; v < o2.lm_logits.cols(); ++v) total += std::exp(double(o2.lm_logits(t, v)) - mx) / sum;
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Forward, OverLengthRejected) {
  auto c = tiny_test_config();
  auto p = init_params<float>(c, 1);
  PackedBatch b;
  b.add(std::vector<int>(17, 1));
  EXPECT_THROW(forward(p, b), ValidationError);
}

TEST(Forward, BatchPermutationCovariant) {
  ModelConfig c{2, 16, 2, 4, 25, 16, 0.0f, true};
  auto p = init_params<float>(c, 7);
  testing::jitter(p, 8, 0.1);
  std::vector<int> s1 = {1, 2, 3}, s2 = {4, 5, 6, 7, 8};
  PackedBatch ab, ba;
  ab.add(s1);
  ab.add(s2);
  ba.add(s2);
  ba.add(s1);
  auto o1 = forward(p, ab), o2 = forward(p, ba);
  EXPECT_LT((o1.lm_logits.topRows(3) - o2.lm_logits.bottomRows(3)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((o1.lm_logits.bottomRows(5) - o2.lm_logits.topRows(5)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Forward, TiedEmbeddingsDriveBothEnds) {
  auto c = tiny_test_config();
  auto p = init_params<double>(c, 1);
  PackedBatch b;
  b.add(std::vector<int>{2, 3});
  auto before = forward(p, b);
  // Changing a row that never appears in the input still changes its output logit.
  p.tok_emb.row(7).array() += 0.5;
  auto after = forward(p, b);
  EXPECT_NE(before.lm_logits(0, 7), after.lm_logits(0, 7));
  EXPECT_EQ(before.lm_logits(0, 6), after.lm_logits(0, 6));
}

TEST(Ablation, EmptyMaskIsIdentity) {
  auto p = init_params<float>(tiny_test_config(), 1);
  EXPECT_TRUE(bit_identical(apply_ablation(p, AblationMask{}), p));
}

TEST(Ablation, MaskedUnitActivationIsZero) {
  ModelConfig c{2, 8, 2, 4, 11, 16, 0.0f, true};
  auto p = init_params<float>(c, 1);
  testing::jitter(p, 2, 0.3);
  AblationMask m;
  m.neurons.insert({0, 5});
  auto q = apply_ablation(p, m);
  std::mt19937_64 rng(1);
  ForwardOptions opt;
  opt.capture.ff_hidden = true;
  for (int trial = 0; trial < 20; ++trial) {
    auto b = random_batch(rng, c.vocab, 3, 16);
    auto out = forward(q, b, opt);
    ASSERT_TRUE((out.ff_hidden[0].col(5).array() == 0.0f).all());
  }
}

TEST(Ablation, IdempotentAndValidated) {
  ModelConfig c{2, 8, 2, 4, 11, 16, 0.0f, true};
  auto p = init_params<float>(c, 1);
  AblationMask m;
  m.neurons.insert({1, 3});
  m.components.insert({0, Sublayer::Attention});
  auto once = apply_ablation(p, m);
  EXPECT_TRUE(bit_identical(apply_ablation(once, m), once));
  EXPECT_TRUE(mask_holds(once, m));
  EXPECT_FALSE(mask_holds(p, m));
  AblationMask bad;
  bad.neurons.insert({2, 0});
  EXPECT_THROW(apply_ablation(p, bad), ValidationError);
  AblationMask bad2;
  bad2.neurons.insert({0, 32});
  EXPECT_THROW(apply_ablation(p, bad2), ValidationError);
}

TEST(Ablation, AllMlpMaskedEqualsAttentionOnlyNetwork) {
  ModelConfig c{2, 8, 2, 4, 11, 16, 0.0f, true};
  auto p = init_params<double>(c, 3);
  testing::jitter(p, 4, 0.3);
  AblationMask m;
  for (int l = 0; l < c.n_layers; ++l) m.components.insert({l, Sublayer::Mlp});
  auto q = apply_ablation(p, m);
  std::vector<int> ids = {1, 5, 2, 7, 3};
  PackedBatch b;
  b.add(ids);
  auto out = forward(q, b);
  auto ref = testing::reference_forward(p, ids, /*skip_attention=*/false, /*skip_mlp=*/true);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    for (int v = 0; v < c.vocab; ++v) ASSERT_NEAR(out.lm_logits(static_cast<Eigen::Index>(t), v), ref.lm_logits[t][static_cast<std::size_t>(v)], 1e-10);
  }
  AblationMask attn;
  for (int l = 0; l < c.n_layers; ++l) attn.components.insert({l, Sublayer::Attention});
  auto out2 = forward(apply_ablation(p, attn), b);
  auto ref2 = testing::reference_forward(p, ids, /*skip_attention=*/true, /*skip_mlp=*/false);
  for (std::size_t t = 0; t < ids.size(); ++t) ASSERT_NEAR(out2.qa_start[static_cast<Eigen::Index>(t)], ref2.start[t], 1e-10);
}

TEST(Ablation, MaskFileParsing) {
  std::istringstream in("# mask\n(0, 5)\n1 7\n(1, attention)\n0, mlp\n");
  auto m = parse_mask(in);
  EXPECT_EQ(m.neurons.size(), 2u);
  EXPECT_EQ(m.components.size(), 2u);
  std::istringstream back(format_mask(m));
  EXPECT_EQ(parse_mask(back), m);
  std::istringstream bad("(0)\n");
  EXPECT_THROW(parse_mask(bad), ValidationError);
}

// ---- gradient oracle -------------------------------------------------------

TEST(Gradients, LmLossFiniteDifference) {
  LossSpec spec;
  spec.kind = LossKind::Lm;
  spec.label_smoothing = 0.1;
  auto r = testing::finite_difference_check(tiny_test_config(), testing::fd_lm_batch(), spec, 11);
  EXPECT_GE(r.checked, 50);
  EXPECT_LT(r.worst, 1e-3) << r.worst_at;
}

TEST(Gradients, QaLossFiniteDifference) {
  LossSpec spec;
  spec.kind = LossKind::Qa;
  spec.targets = {{3, 7, 4, 5}, {2, 5, 2, 2}};
  auto r = testing::finite_difference_check(tiny_test_config(), testing::fd_qa_batch(), spec, 21);
  EXPECT_GE(r.checked, 50);
  EXPECT_LT(r.worst, 1e-3) << r.worst_at;
}

TEST(Gradients, LabelSmoothingZeroIsPlainCrossEntropy) {
  auto p = init_params<double>(tiny_test_config(), 1);
  testing::jitter(p, 2, 0.3);
  PackedBatch b;
  b.add(std::vector<int>{1, 2, 3, 4});
  auto out = forward(p, b);
  double ce = 0;
  for (int t = 0; t < 3; ++t) {
    double mx = out.lm_logits.row(t).maxCoeff();
    double lse = mx + std::log((out.lm_logits.row(t).array() - mx).exp().sum());
    ce += lse - out.lm_logits(t, b.ids[static_cast<std::size_t>(t + 1)]);
  }
  EXPECT_NEAR(lm_loss(out.lm_logits, b, 0.0, nullptr), ce / 3, 1e-12);
}

TEST(Gradients, DropoutGradientConsistentWithSameMask) {
  // With a fixed dropout seed the stochastic forward is a deterministic
  // function, so finite differences still apply.
  ModelConfig c = tiny_test_config();
  c.dropout = 0.2f;
  auto p = init_params<double>(c, 4);
  testing::jitter(p, 5, 0.3);
  PackedBatch b;
  b.add(std::vector<int>{1, 4, 2, 8, 5});
  LossSpec spec;
  spec.kind = LossKind::Lm;
  ForwardOptions opt;
  opt.train = true;
  opt.dropout_seed = 77;
  auto g = gradients(p, b, spec, {}, opt);
  auto f = [&](const TransformerParams<double>& q) {
    auto o = forward(q, b, opt);
    return lm_loss(o.lm_logits, b, 0.0, nullptr);
  };
  const double h = 1e-5;
  for (Eigen::Index i : {0, 5, 17}) {
    auto up = p, down = p;
    up.layers[0].w1.data()[i] += h;
    down.layers[0].w1.data()[i] -= h;
    double fd = (f(up) - f(down)) / (2 * h);
    EXPECT_NEAR(g.grads.layers[0].w1.data()[i], fd, 1e-6 + 1e-4 * std::abs(fd));
  }
}

TEST(Gradients, GroupsLeaveFrozenGradientsZero) {
  auto p = init_params<double>(tiny_test_config(), 1);
  PackedBatch b;
  b.add(std::vector<int>{1, 2, 3, 4, 5});
  LossSpec spec;
  spec.kind = LossKind::Qa;
  spec.targets = {{2, 5, 3, 4}};
  GradGroups groups;
  groups.blocks = false;
  groups.pos_emb = false;
  groups.final_norm = false;
  auto g = gradients(p, b, spec, groups);
  EXPECT_TRUE(g.grads.layers[0].wq.isZero(0));
  EXPECT_TRUE(g.grads.pos_emb.isZero(0));
  EXPECT_TRUE(g.grads.lnf_g.isZero(0));
  EXPECT_FALSE(g.grads.tok_emb.isZero(0));
  EXPECT_FALSE(g.grads.qa_start.isZero(0));
  auto full = gradients(p, b, spec);
  EXPECT_LT((full.grads.tok_emb - g.grads.tok_emb).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Checkpoint, ByteExactRoundTrip) {
  testing::TempDir dir("ckpt");
  Checkpoint ck;
  ck.params = init_params<float>(ModelConfig{2, 16, 4, 4, 50, 32, 0.05f, true}, 3);
  ck.meta = {42, 7, "frozen", 0xDEADBEEFULL, R"({"note":"x"})"};
  save_checkpoint(ck, dir.file("a.eprb"));
  auto back = load_checkpoint(dir.file("a.eprb"));
  EXPECT_TRUE(bit_identical(back.params, ck.params));
  EXPECT_EQ(back.meta, ck.meta);
  save_checkpoint(back, dir.file("b.eprb"));
  EXPECT_EQ(testing::read_file(dir.file("a.eprb")), testing::read_file(dir.file("b.eprb")));
  auto bytes = testing::read_file(dir.file("a.eprb"));
  EXPECT_EQ(bytes.substr(0, 4), "EPRB");
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), ValidationError);
  EXPECT_THROW(deserialize_checkpoint("XXXX" + bytes.substr(4)), ValidationError);
  EXPECT_THROW(load_checkpoint(dir.file("missing.eprb")), MissingArtifactError);
}

}  // namespace
}  // namespace srlprobe::model
