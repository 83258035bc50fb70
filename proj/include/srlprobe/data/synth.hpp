#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "srlprobe/data/qasrl.hpp"
#include "srlprobe/data/roles.hpp"
#include "srlprobe/data/vocab.hpp"

namespace srlprobe::data {

/// Template grammar over agent/theme nouns, transitive verbs, locative and
/// temporal adjuncts. Sentences come in active and passive voice with
/// several adjunct orders, so agent vs theme is decided by syntax, not by
/// the noun itself.
struct SynthOptions {
  /// Number of pre-training documents; 0 means "same as n".
  std::size_t pretrain_docs = 0;
  /// Fraction of pre-training documents written as a sentence followed by a
  /// question about it and its answer.
  double qa_discourse_fraction = 0.5;
  /// Fraction of sentences made of two conjoined events; questions name
  /// their predicate, so the answer must come from the matching clause.
  double two_clause_fraction = 0.0;
  /// Write QA documents as "question sentence answer" instead of
  /// "sentence question answer".
  bool question_first = false;
};

struct SynthCorpus {
  std::vector<std::string> pretrain_docs;  // one document per entry
  std::vector<QASRLExample> examples;

  std::string pretrain_text() const {
    std::string out;
    for (const auto& d : pretrain_docs) {
      out += d;
      out.push_back('\n');
    }
    return out;
  }
};

namespace synth_lexicon {

inline const std::vector<std::string> kNouns = {
    "dog",    "cat",   "child",  "teacher", "farmer", "doctor", "pilot",  "baker",
    "girl",   "boy",   "horse",  "bird",    "artist", "nurse",  "king",   "queen",
    "driver", "student", "judge", "singer"};

// base form, past form
inline const std::vector<std::pair<std::string, std::string>> kVerbs = {
    {"chase", "chased"},   {"help", "helped"},     {"push", "pushed"},   {"call", "called"},
    {"visit", "visited"},  {"follow", "followed"}, {"watch", "watched"}, {"thank", "thanked"},
    {"greet", "greeted"},  {"kick", "kicked"},     {"pull", "pulled"},   {"warn", "warned"},
    {"praise", "praised"}, {"hug", "hugged"},      {"blame", "blamed"},  {"guide", "guided"}};

inline const std::vector<std::string> kPlaces = {
    "park",   "kitchen", "garden", "school", "market", "forest",
    "library", "station", "village", "harbor", "office", "church"};

inline const std::vector<std::string> kPlacePreps = {"in", "at", "near"};

inline const std::vector<std::string> kTimes = {
    "yesterday",    "today",     "tonight",  "last week", "last night",
    "on monday",    "on sunday", "this morning", "at noon", "at dawn"};

inline const std::vector<std::string> kFunctionWords = {
    "the", "was", "by", "and", "who", "what", "where", "when", "did", "someone", "something",
    ",",   ".",   "?"};

}  // namespace synth_lexicon

/// The closed vocabulary of the grammar plus [PAD]/[UNK]/[SEP]/[CLS].
inline TokenizerVocab synth_vocab() {
  using namespace synth_lexicon;
  std::set<std::string> words;
  auto add_phrase = [&](const std::string& p) {
    for (auto& w : split_words(p)) words.insert(w);
  };
  for (auto& w : kNouns) words.insert(w);
  for (auto& [b, p] : kVerbs) {
    words.insert(b);
    words.insert(p);
  }
  for (auto& w : kPlaces) words.insert(w);
  for (auto& w : kPlacePreps) words.insert(w);
  for (auto& t : kTimes) add_phrase(t);
  for (auto& w : kFunctionWords) words.insert(w);
  std::vector<std::string> entries = {std::string(kPadToken), std::string(kUnkToken),
                                      std::string(kSepToken), std::string(kClsToken)};
  entries.insert(entries.end(), words.begin(), words.end());
  return TokenizerVocab::from_entries(std::move(entries));
}

namespace detail {

struct SynthSentence {
  std::vector<std::string> words;
  int predicate = 0;
  std::array<TokenSpan, 4> spans{};  // ARG0, ARG1, LOC, TMP
  std::string verb_base;
  std::string verb_past;
};

/// Lexical choices already used in a sentence; a second clause avoids them
/// so every answer string occurs once.
struct Used {
  std::set<std::size_t> nouns, verbs, places, times;
};

inline constexpr std::array<CollapsedRole, 4> kSynthRoles = {
    CollapsedRole::Arg0Agent, CollapsedRole::Arg1Theme, CollapsedRole::ArgmLoc,
    CollapsedRole::ArgmTmp};
inline constexpr std::array<const char*, 4> kSynthRawLabels = {"ARG0", "ARG1", "ARGM-LOC",
                                                               "ARGM-TMP"};

template <class Rng>
std::size_t pick(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

template <class Rng>
std::size_t pick_unused(Rng& rng, std::size_t n, std::set<std::size_t>& used) {
  std::size_t k = pick(rng, n - used.size());
  for (std::size_t u : used) {
    if (u <= k) ++k;
  }
  used.insert(k);
  return k;
}

/// One event clause, appended to `w` with spans relative to the whole
/// sentence.
template <class Rng>
SynthSentence make_clause(Rng& rng, Used& used, std::vector<std::string>& w) {
  using namespace synth_lexicon;
  SynthSentence s;
  const std::size_t ag = pick_unused(rng, kNouns.size(), used.nouns);
  const std::size_t th = pick_unused(rng, kNouns.size(), used.nouns);
  const auto& verb = kVerbs[pick_unused(rng, kVerbs.size(), used.verbs)];
  s.verb_base = verb.first;
  s.verb_past = verb.second;
  std::vector<std::string> agent = {"the", kNouns[ag]};
  std::vector<std::string> theme = {"the", kNouns[th]};
  std::vector<std::string> loc = {kPlacePreps[pick(rng, kPlacePreps.size())], "the",
                                  kPlaces[pick_unused(rng, kPlaces.size(), used.places)]};
  std::vector<std::string> tmp = split_words(kTimes[pick_unused(rng, kTimes.size(), used.times)]);

  auto put = [&](const std::vector<std::string>& phrase) {
    TokenSpan span{static_cast<int>(w.size()), static_cast<int>(w.size() + phrase.size()) - 1};
    w.insert(w.end(), phrase.begin(), phrase.end());
    return span;
  };
  auto put_verb = [&] {
    s.predicate = static_cast<int>(w.size());
    w.push_back(s.verb_past);
  };
  auto& sp = s.spans;
  switch (pick(rng, 6)) {
    case 0:  // AG V TH LOC TMP
      sp[0] = put(agent);
      put_verb();
      sp[1] = put(theme);
      sp[2] = put(loc);
      sp[3] = put(tmp);
      break;
    case 1:  // TMP , AG V TH LOC
      sp[3] = put(tmp);
      w.push_back(",");
      sp[0] = put(agent);
      put_verb();
      sp[1] = put(theme);
      sp[2] = put(loc);
      break;
    case 2:  // TH was V by AG LOC TMP
      sp[1] = put(theme);
      w.push_back("was");
      put_verb();
      w.push_back("by");
      sp[0] = put(agent);
      sp[2] = put(loc);
      sp[3] = put(tmp);
      break;
    case 3:  // LOC , AG V TH TMP
      sp[2] = put(loc);
      w.push_back(",");
      sp[0] = put(agent);
      put_verb();
      sp[1] = put(theme);
      sp[3] = put(tmp);
      break;
    case 4:  // TMP , TH was V by AG LOC
      sp[3] = put(tmp);
      w.push_back(",");
      sp[1] = put(theme);
      w.push_back("was");
      put_verb();
      w.push_back("by");
      sp[0] = put(agent);
      sp[2] = put(loc);
      break;
    default:  // AG V TH TMP LOC
      sp[0] = put(agent);
      put_verb();
      sp[1] = put(theme);
      sp[3] = put(tmp);
      sp[2] = put(loc);
      break;
  }
  return s;
}

/// A one- or two-clause sentence; the returned clause is the one questions
/// are asked about, and its `words` hold the full sentence.
template <class Rng>
SynthSentence make_sentence(Rng& rng, double two_clause_fraction = 0.0) {
  Used used;
  std::vector<std::string> words;
  std::vector<SynthSentence> clauses;
  clauses.push_back(make_clause(rng, used, words));
  if (std::bernoulli_distribution(two_clause_fraction)(rng)) {
    words.push_back(",");
    words.push_back("and");
    clauses.push_back(make_clause(rng, used, words));
  }
  SynthSentence target = clauses[pick(rng, clauses.size())];
  target.words = std::move(words);
  return target;
}

template <class Rng>
std::vector<std::string> make_question(Rng& rng, const SynthSentence& s, int role) {
  const std::string& vb = s.verb_base;
  const std::string& vbd = s.verb_past;
  switch (role) {
    case 0:
      return {"who", vbd, pick(rng, 2) == 0 ? "someone" : "something", "?"};
    case 1:
      if (pick(rng, 2) == 0) return {"who", "was", vbd, "?"};
      return {"who", "did", "someone", vb, "?"};
    case 2:
      return {"where", "did", "someone", vb, "someone", "?"};
    default:
      return {"when", "did", "someone", vb, "someone", "?"};
  }
}

}  // namespace detail

/// Deterministic synthetic corpus: `n` role-labelled QA examples plus a
/// pre-training document stream drawn from the same grammar with an
/// independent random stream.
inline SynthCorpus synth_role_corpus(std::uint64_t seed, std::size_t n, SynthOptions opts = {}) {
  if (n == 0) throw ValidationError("synth: n must be positive");
  SynthCorpus out;
  std::mt19937_64 qa_rng(seed * 0x9E3779B97F4A7C15ULL + 1);
  out.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto s = detail::make_sentence(qa_rng, opts.two_clause_fraction);
    int role = static_cast<int>(detail::pick(qa_rng, 4));
    QASRLExample ex;
    ex.sentence = s.words;
    ex.predicate_index = s.predicate;
    ex.question = detail::make_question(qa_rng, s, role);
    ex.answer_span = s.spans[static_cast<std::size_t>(role)];
    ex.answer_text = join_words(s.words, ex.answer_span.start, ex.answer_span.end + 1);
    ex.role = detail::kSynthRoles[static_cast<std::size_t>(role)];
    ex.raw_role = detail::kSynthRawLabels[static_cast<std::size_t>(role)];
    out.examples.push_back(std::move(ex));
  }

  std::mt19937_64 lm_rng(seed * 0x9E3779B97F4A7C15ULL + 2);
  const std::size_t docs = opts.pretrain_docs == 0 ? n : opts.pretrain_docs;
  std::bernoulli_distribution qa_doc(opts.qa_discourse_fraction);
  out.pretrain_docs.reserve(docs);
  for (std::size_t i = 0; i < docs; ++i) {
    auto s = detail::make_sentence(lm_rng, opts.two_clause_fraction);
    std::string doc = join_words(s.words, 0, static_cast<int>(s.words.size())) + " .";
    if (qa_doc(lm_rng)) {
      int role = static_cast<int>(detail::pick(lm_rng, 4));
      const auto qw = detail::make_question(lm_rng, s, role);
      const auto q = join_words(qw, 0, static_cast<int>(qw.size()));
      const auto& span = s.spans[static_cast<std::size_t>(role)];
      const auto answer = join_words(s.words, span.start, span.end + 1);
      doc = opts.question_first ? q + " " + doc + " " + answer + " ." : doc + " " + q + " " + answer + " .";
    }
    out.pretrain_docs.push_back(std::move(doc));
  }
  return out;
}

}  // namespace srlprobe::data
