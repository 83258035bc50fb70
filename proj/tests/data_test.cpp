#include <gtest/gtest.h>

#include <map>

#include "srlprobe/data/qasrl.hpp"
#include "srlprobe/data/roles.hpp"
#include "srlprobe/data/synth.hpp"
#include "srlprobe/data/tokenizer.hpp"
#include "srlprobe/data/vocab.hpp"
#include "test_util.hpp"

namespace srlprobe::data {
namespace {

using srlprobe::testing::TempDir;
using srlprobe::testing::write_file;

TokenizerVocab small_vocab() {
  return TokenizerVocab::from_entries({"[PAD]", "[UNK]", "[SEP]", "the", "dog", "bit", "cat", "play",
                                       "##ing", "##ed", "who", "?", "in", "park"});
}

TEST(Vocab, FourLineFile) {
  TempDir dir("vocab");
  write_file(dir.file("v.txt"), "[PAD]\n[UNK]\n[SEP]\nthe\n");
  auto v = load_vocab(dir.file("v.txt"));
  EXPECT_EQ(v.size(), 4);
  EXPECT_EQ(v.sep_id(), 2);
  EXPECT_EQ(v.pad_id(), 0);
  EXPECT_EQ(v.unk_id(), 1);
  EXPECT_FALSE(v.cls_id().has_value());
}

TEST(Vocab, DuplicateEntryRejected) {
  TempDir dir("vocab");
  write_file(dir.file("v.txt"), "[PAD]\n[UNK]\n[SEP]\nthe\nthe\n");
  EXPECT_THROW(load_vocab(dir.file("v.txt")), ValidationError);
}

TEST(Vocab, MissingSpecialRejected) {
  EXPECT_THROW(TokenizerVocab::from_entries({"[PAD]", "[UNK]", "the"}), ValidationError);
}

TEST(Vocab, StandardWordPieceSize) {
  TempDir dir("vocab");
  std::string content = "[PAD]\n";
  for (int i = 1; i < 100; ++i) content += "[unused" + std::to_string(i) + "]\n";
  content += "[UNK]\n[CLS]\n[SEP]\n[MASK]\n";
  for (int i = 104; i < 30522; ++i) content += "w" + std::to_string(i) + "\n";
  write_file(dir.file("v.txt"), content);
  auto v = load_vocab(dir.file("v.txt"));
  EXPECT_EQ(v.size(), 30522);
  EXPECT_EQ(v.sep_id(), 102);
  EXPECT_EQ(v.cls_id(), 101);
}

TEST(Tokenize, EmptyInput) { EXPECT_TRUE(tokenize(small_vocab(), "").empty()); }

TEST(Tokenize, WholeWordIsSingleId) {
  auto v = small_vocab();
  EXPECT_EQ(tokenize(v, "Dog"), std::vector<int>{*v.find("dog")});
}

TEST(Tokenize, UnknownWordMapsToUnk) {
  auto v = small_vocab();
  EXPECT_EQ(tokenize(v, "zzz"), std::vector<int>{v.unk_id()});
}

TEST(Tokenize, GreedyLongestMatchAndDecodeRoundTrip) {
  auto v = small_vocab();
  auto ids = tokenize(v, "the cat playing in the park ?");
  std::vector<int> expected = {*v.find("the"), *v.find("cat"), *v.find("play"), *v.find("##ing"),
                               *v.find("in"),  *v.find("the"), *v.find("park"), *v.find("?")};
  EXPECT_EQ(ids, expected);
  auto text = decode(v, ids);
  EXPECT_EQ(text, "the cat playing in the park ?");
  EXPECT_EQ(tokenize(v, text), ids);
}

TEST(Tokenize, SpecialTokenPassesThrough) {
  auto v = small_vocab();
  EXPECT_EQ(tokenize(v, "who [SEP] dog"), (std::vector<int>{*v.find("who"), v.sep_id(), *v.find("dog")}));
}

TEST(EncodeQa, OffsetArithmetic) {
  std::vector<std::string> entries = {"[PAD]", "[UNK]", "[SEP]"};
  for (int i = 0; i < 20; ++i) entries.push_back("w" + std::to_string(i));
  auto v = TokenizerVocab::from_entries(entries);
  QASRLExample ex;
  ex.question = {"w0", "w1", "w2", "w3", "w4"};
  for (int i = 5; i < 13; ++i) ex.sentence.push_back("w" + std::to_string(i));
  ex.answer_span = {2, 3};
  ex.answer_text = "w7 w8";
  auto e = encode_qa(v, ex, 32);
  EXPECT_EQ(e.answer_start, 8);
  EXPECT_EQ(e.answer_end, 9);
  EXPECT_EQ(e.sep_position, 5);
  EXPECT_EQ(e.input_ids[5], v.sep_id());
  EXPECT_EQ(e.length, 14);
  EXPECT_EQ(e.input_ids.size(), 32u);
  for (int i = 0; i < 32; ++i) EXPECT_EQ(e.context_mask[static_cast<std::size_t>(i)], (i >= 6 && i < 14) ? 1 : 0);
}

TEST(EncodeQa, TruncatedAnswerIsSkipSignal) {
  auto v = small_vocab();
  QASRLExample ex;
  ex.question = {"who", "bit", "?"};
  ex.sentence = {"the", "cat", "bit", "the", "dog"};
  ex.answer_span = {3, 4};
  ex.answer_text = "the dog";
  EXPECT_NO_THROW(encode_qa(v, ex, 9));
  try {
    encode_qa(v, ex, 7);
    FAIL() << "expected skip";
  } catch (const SkipExample& s) {
    EXPECT_EQ(s.reason(), "answer_truncated");
  }
}

TEST(EncodeQa, SentenceTailTruncatedFirst) {
  auto v = small_vocab();
  QASRLExample ex;
  ex.question = {"who", "bit", "?"};
  ex.sentence = {"the", "cat", "bit", "the", "dog"};
  ex.answer_span = {0, 1};
  ex.answer_text = "the cat";
  auto e = encode_qa(v, ex, 6);  // 3 + 1 + 2 sentence tokens survive
  EXPECT_EQ(e.length, 6);
  EXPECT_EQ(e.answer_start, 4);
  EXPECT_EQ(e.answer_end, 5);
}

TEST(EncodeQa, EmptySentenceRejected) {
  auto v = small_vocab();
  QASRLExample ex;
  ex.question = {"who"};
  EXPECT_THROW(encode_qa(v, ex, 16), SkipExample);
}

TEST(FilterAmbiguous, RepeatedAnswerDropped) {
  QASRLExample a;
  a.sentence = split_words("the dog bit the dog");
  a.answer_text = "the dog";
  QASRLExample b;
  b.sentence = split_words("the dog bit the cat");
  b.answer_text = "the dog";
  auto [kept, skipped] = filter_ambiguous({a, b});
  EXPECT_EQ(skipped, 1u);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].sentence, b.sentence);
}

TEST(FilterAmbiguous, NeverDropsUniqueAnswers) {
  auto corpus = synth_role_corpus(3, 300);
  for (const auto& ex : corpus.examples) ASSERT_EQ(count_answer_occurrences(ex), 1);
  auto [kept, skipped] = filter_ambiguous(corpus.examples);
  EXPECT_EQ(skipped, 0u);
  EXPECT_EQ(kept.size(), corpus.examples.size());
}

TEST(CollapseRole, PropBankCategories) {
  EXPECT_EQ(collapse_role("ARGM-TMP"), CollapsedRole::ArgmTmp);
  EXPECT_EQ(collapse_role("ARG2-Recipient"), CollapsedRole::Arg2Other);
  EXPECT_EQ(collapse_role("ARG3"), CollapsedRole::Arg2Other);
  EXPECT_EQ(collapse_role("ARGM-ADV"), CollapsedRole::Arg2Other);
  EXPECT_EQ(collapse_role("ARGM-PRD"), CollapsedRole::Arg2Other);
  EXPECT_EQ(collapse_role("ARGM-PRP"), CollapsedRole::Arg2Other);
  EXPECT_EQ(collapse_role("ARG0"), CollapsedRole::Arg0Agent);
  EXPECT_EQ(collapse_role("R-ARG1"), CollapsedRole::Arg1Theme);
  EXPECT_EQ(collapse_role("ARGM-LOC"), CollapsedRole::ArgmLoc);
  EXPECT_EQ(collapse_role("ARGM-DIR"), CollapsedRole::ArgmDir);
  EXPECT_EQ(collapse_role("Quantity"), CollapsedRole::Unknown);
  EXPECT_EQ(collapse_role("ZZZ"), CollapsedRole::Unknown);
}

TEST(CollapseRole, IdempotentOnOutputs) {
  for (auto r : kAllRoles) EXPECT_EQ(collapse_role(role_name(r)), r);
  for (const char* raw : {"ARG0", "ARG2-Recipient", "ARGM-CAU", "ARGM-MNR", "junk", "ARGM-NEG"}) {
    auto once = collapse_role(raw);
    EXPECT_EQ(collapse_role(role_name(once)), once);
  }
}

TEST(MatchSrlSpan, FullOverlap) {
  EXPECT_EQ(match_srl_span({10, 20}, {{{10, 20}, "ARG0"}}), std::optional<std::string>("ARG0"));
}

TEST(MatchSrlSpan, BelowHalfIsNone) {
  EXPECT_FALSE(match_srl_span({0, 10}, {{{6, 30}, "ARG1"}}).has_value());
}

TEST(MatchSrlSpan, TieGoesToEarliestStart) {
  std::vector<std::pair<CharRange, std::string>> args2 = {{{2, 8}, "B"}, {{0, 6}, "A"}};
  EXPECT_EQ(match_srl_span({0, 10}, args2), std::optional<std::string>("A"));
}

TEST(Synth, Deterministic) {
  auto a = synth_role_corpus(7, 1);
  auto b = synth_role_corpus(7, 1);
  EXPECT_EQ(a.pretrain_text(), b.pretrain_text());
  ASSERT_EQ(a.examples.size(), 1u);
  EXPECT_EQ(raw_record_json(a.examples[0]).dump(), raw_record_json(b.examples[0]).dump());
  EXPECT_THROW(synth_role_corpus(7, 0), ValidationError);
}

TEST(Synth, EveryExampleRoundTripsThroughEncoding) {
  auto vocab = synth_vocab();
  auto corpus = synth_role_corpus(11, 500);
  for (const auto& ex : corpus.examples) {
    auto e = encode_qa(vocab, ex, 64);
    std::span<const int> ans(e.input_ids.data() + e.answer_start,
                             static_cast<std::size_t>(e.answer_end - e.answer_start + 1));
    ASSERT_EQ(decode(vocab, ans), ex.answer_text);
    // context block is contiguous and strictly after [SEP]
    for (int i = 0; i < e.length; ++i) {
      ASSERT_EQ(e.context_mask[static_cast<std::size_t>(i)] == 1, i > e.sep_position);
    }
  }
  for (const auto& doc : corpus.pretrain_docs) {
    for (int id : tokenize(vocab, doc)) ASSERT_NE(id, vocab.unk_id()) << doc;
  }
}

TEST(Synth, RoleDistributionNearUniform) {
  auto corpus = synth_role_corpus(2024, 10000);
  std::map<CollapsedRole, int> counts;
  for (const auto& ex : corpus.examples) ++counts[ex.role];
  ASSERT_EQ(counts.size(), 4u);
  for (auto [role, n] : counts) EXPECT_NEAR(n / 10000.0, 0.25, 0.02) << role_name(role);
}

TEST(DatasetIo, RawRecordRoundTripAndPrepare) {
  TempDir dir("io");
  auto vocab = synth_vocab();
  auto corpus = synth_role_corpus(5, 50);
  // add one ambiguous and one answer-less record
  QASRLExample amb;
  amb.sentence = split_words("the dog chased the dog in the park");
  amb.question = split_words("who chased someone ?");
  amb.answer_text = "the dog";
  amb.answer_span = {0, 1};
  amb.raw_role = "ARG0";
  auto raw = corpus.examples;
  raw.push_back(amb);
  save_raw_dataset(raw, dir.file("raw.jsonl"));
  auto loaded = load_raw_dataset(dir.file("raw.jsonl"));
  ASSERT_EQ(loaded.size(), raw.size());
  EXPECT_EQ(loaded[0].answer_span, raw[0].answer_span);
  EXPECT_EQ(loaded[0].role, raw[0].role);
  auto [encoded, report] = prepare_dataset(vocab, loaded, 64);
  EXPECT_EQ(report.total, 51u);
  EXPECT_EQ(report.kept, 50u);
  EXPECT_EQ(report.reasons.at("ambiguous_answer"), 1u);
  save_encoded(encoded, dir.file("enc.jsonl"));
  auto back = load_encoded(dir.file("enc.jsonl"), vocab.pad_id());
  ASSERT_EQ(back.size(), encoded.size());
  EXPECT_EQ(back[3].input_ids, encoded[3].input_ids);
  EXPECT_EQ(back[3].context_mask, encoded[3].context_mask);
  EXPECT_EQ(back[3].answer_start, encoded[3].answer_start);
}

TEST(DatasetIo, RoleFromSrlArgsWhenRawRoleMissing) {
  auto j = nlohmann::json::parse(
      R"({"sentence":"the dog chased the cat","predicate_index":2,"question":"who chased something ?",)"
      R"("answer":"the dog","answer_char_span":[0,7],"srl_args":[{"span":[0,7],"label":"ARG0"},)"
      R"({"span":[15,22],"label":"ARG1"}]})");
  auto ex = parse_raw_record(j);
  EXPECT_EQ(ex.raw_role, "ARG0");
  EXPECT_EQ(ex.role, CollapsedRole::Arg0Agent);
  EXPECT_EQ(ex.answer_span, (TokenSpan{0, 1}));
}

}  // namespace
}  // namespace srlprobe::data
