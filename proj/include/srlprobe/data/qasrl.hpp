#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "srlprobe/core/error.hpp"
#include "srlprobe/data/roles.hpp"
#include "srlprobe/data/tokenizer.hpp"

namespace srlprobe::data {

/// Inclusive [start, end] token range.
struct TokenSpan {
  int start = 0;
  int end = 0;
  int length() const noexcept { return end - start + 1; }
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// Half-open [begin, end) character range.
struct CharRange {
  int begin = 0;
  int end = 0;
  int length() const noexcept { return std::max(0, end - begin); }
};

struct QASRLExample {
  std::vector<std::string> sentence;
  int predicate_index = 0;
  std::vector<std::string> question;
  std::string answer_text;
  TokenSpan answer_span;  // sentence word indices
  CollapsedRole role = CollapsedRole::Unknown;
  std::string raw_role;
};

struct EncodedExample {
  std::vector<int> input_ids;          // padded to max_seq with pad_id
  std::vector<std::uint8_t> context_mask;  // 1 on sentence positions only
  int length = 0;                      // number of non-padding positions
  int sep_position = 0;
  int answer_start = 0;
  int answer_end = 0;
  CollapsedRole role = CollapsedRole::Unknown;

  /// First and one-past-last context positions.
  std::pair<int, int> context_range() const noexcept {
    return {sep_position + 1, length};
  }
};

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

inline std::string join_words(const std::vector<std::string>& words, int begin, int end) {
  std::string out;
  for (int i = begin; i < end; ++i) {
    if (i > begin) out.push_back(' ');
    out += words[static_cast<std::size_t>(i)];
  }
  return out;
}

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Start indices of every occurrence of `needle` as a contiguous word
/// subsequence of `hay` (case-insensitive).
inline std::vector<int> find_subsequence(const std::vector<std::string>& hay,
                                         const std::vector<std::string>& needle) {
  std::vector<int> hits;
  if (needle.empty() || needle.size() > hay.size()) return hits;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; k < needle.size() && ok; ++k) {
      ok = lower(hay[i + k]) == lower(needle[k]);
    }
    if (ok) hits.push_back(static_cast<int>(i));
  }
  return hits;
}

}  // namespace detail

/// Locates the answer text inside the sentence by exact word-subsequence match.
/// Zero matches and multiple matches both raise SkipExample.
inline TokenSpan locate_answer(const std::vector<std::string>& sentence,
                               std::string_view answer_text) {
  auto needle = split_words(answer_text);
  auto hits = detail::find_subsequence(sentence, needle);
  if (hits.empty()) throw SkipExample("answer_not_found", "answer text not found in sentence");
  if (hits.size() > 1) throw SkipExample("ambiguous_answer", "answer text occurs more than once");
  return {hits[0], hits[0] + static_cast<int>(needle.size()) - 1};
}

inline int count_answer_occurrences(const QASRLExample& ex) {
  return static_cast<int>(detail::find_subsequence(ex.sentence, split_words(ex.answer_text)).size());
}

/// Drops examples whose answer occurs more than once in the sentence.
inline std::pair<std::vector<QASRLExample>, std::size_t> filter_ambiguous(
    std::vector<QASRLExample> examples) {
  std::vector<QASRLExample> kept;
  kept.reserve(examples.size());
  std::size_t skipped = 0;
  for (auto& ex : examples) {
    if (count_answer_occurrences(ex) > 1) {
      ++skipped;
    } else {
      kept.push_back(std::move(ex));
    }
  }
  return {std::move(kept), skipped};
}

/// Builds `question [SEP] sentence`. Over-length inputs lose sentence tail
/// first, then question tail; an answer that no longer fits raises SkipExample.
inline EncodedExample encode_qa(const TokenizerVocab& vocab, const QASRLExample& ex, int max_seq) {
  if (ex.sentence.empty()) throw SkipExample("empty_sentence", "sentence is empty");
  if (ex.answer_span.start < 0 || ex.answer_span.end < ex.answer_span.start ||
      ex.answer_span.end >= static_cast<int>(ex.sentence.size())) {
    throw SkipExample("bad_span", "answer span outside sentence");
  }
  std::vector<int> q_ids;
  for (const auto& w : ex.question) {
    auto p = tokenize(vocab, w);
    q_ids.insert(q_ids.end(), p.begin(), p.end());
  }
  std::vector<int> s_ids;
  int ans_first = -1;
  int ans_last = -1;
  for (int i = 0; i < static_cast<int>(ex.sentence.size()); ++i) {
    auto p = tokenize(vocab, ex.sentence[static_cast<std::size_t>(i)]);
    if (i == ex.answer_span.start) ans_first = static_cast<int>(s_ids.size());
    s_ids.insert(s_ids.end(), p.begin(), p.end());
    if (i == ex.answer_span.end) ans_last = static_cast<int>(s_ids.size()) - 1;
  }
  if (q_ids.empty()) throw SkipExample("empty_question", "question tokenizes to nothing");
  if (s_ids.empty()) throw SkipExample("empty_sentence", "sentence tokenizes to nothing");
  if (ans_last < ans_first) throw SkipExample("bad_span", "answer tokenizes to nothing");

  int overflow = static_cast<int>(q_ids.size() + 1 + s_ids.size()) - max_seq;
  if (overflow > 0) {
    int cut = std::min<int>(overflow, static_cast<int>(s_ids.size()));
    s_ids.resize(s_ids.size() - static_cast<std::size_t>(cut));
    overflow -= cut;
  }
  if (overflow > 0) {
    int cut = std::min<int>(overflow, static_cast<int>(q_ids.size()));
    q_ids.resize(q_ids.size() - static_cast<std::size_t>(cut));
    overflow -= cut;
  }
  if (ans_last >= static_cast<int>(s_ids.size()) || q_ids.empty() || overflow > 0) {
    throw SkipExample("answer_truncated", "answer does not fit in max_seq after truncation");
  }

  EncodedExample out;
  out.input_ids.assign(static_cast<std::size_t>(max_seq), vocab.pad_id());
  out.context_mask.assign(static_cast<std::size_t>(max_seq), 0);
  std::copy(q_ids.begin(), q_ids.end(), out.input_ids.begin());
  out.sep_position = static_cast<int>(q_ids.size());
  out.input_ids[static_cast<std::size_t>(out.sep_position)] = vocab.sep_id();
  const int ctx = out.sep_position + 1;
  std::copy(s_ids.begin(), s_ids.end(), out.input_ids.begin() + ctx);
  out.length = ctx + static_cast<int>(s_ids.size());
  std::fill(out.context_mask.begin() + ctx, out.context_mask.begin() + out.length, 1);
  out.answer_start = ctx + ans_first;
  out.answer_end = ctx + ans_last;
  out.role = ex.role;
  return out;
}

/// Label of the SRL argument with the largest character overlap, provided it
/// covers at least half the answer. Ties go to the earliest argument start.
inline std::optional<std::string> match_srl_span(
    CharRange answer, const std::vector<std::pair<CharRange, std::string>>& srl_args) {
  const int alen = answer.length();
  if (alen == 0) return std::nullopt;
  int best = -1;
  int best_overlap = 0;
  for (int i = 0; i < static_cast<int>(srl_args.size()); ++i) {
    const auto& arg = srl_args[static_cast<std::size_t>(i)].first;
    int ov = std::max(0, std::min(answer.end, arg.end) - std::max(answer.begin, arg.begin));
    if (ov == 0) continue;
    if (best < 0 || ov > best_overlap ||
        (ov == best_overlap && arg.begin < srl_args[static_cast<std::size_t>(best)].first.begin)) {
      best = i;
      best_overlap = ov;
    }
  }
  if (best < 0 || 2 * best_overlap < alen) return std::nullopt;
  return srl_args[static_cast<std::size_t>(best)].second;
}

// ---------------------------------------------------------------------------
// Record I/O. Raw records are JSON lines with fields
//   sentence, predicate_index, question, answer, answer_char_span, raw_role
// and optionally srl_args: [{"span": [b, e], "label": "ARG0"}, ...] used when
// raw_role is absent.

struct SkipReport {
  std::size_t total = 0;
  std::size_t kept = 0;
  std::map<std::string, std::size_t> reasons;

  std::size_t skipped() const noexcept { return total - kept; }
  double skip_fraction() const noexcept {
    return total == 0 ? 0.0 : static_cast<double>(skipped()) / static_cast<double>(total);
  }
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["total"] = total;
    j["kept"] = kept;
    j["skipped"] = skipped();
    j["skip_fraction"] = skip_fraction();
    j["reasons"] = reasons;
    return j;
  }
};

inline nlohmann::ordered_json raw_record_json(const QASRLExample& ex) {
  nlohmann::ordered_json j;
  std::string sentence = join_words(ex.sentence, 0, static_cast<int>(ex.sentence.size()));
  j["sentence"] = sentence;
  j["predicate_index"] = ex.predicate_index;
  j["question"] = join_words(ex.question, 0, static_cast<int>(ex.question.size()));
  j["answer"] = ex.answer_text;
  int begin = 0;
  for (int i = 0; i < ex.answer_span.start; ++i) {
    begin += static_cast<int>(ex.sentence[static_cast<std::size_t>(i)].size()) + 1;
  }
  j["answer_char_span"] = {begin, begin + static_cast<int>(ex.answer_text.size())};
  j["raw_role"] = ex.raw_role.empty() ? std::string(role_name(ex.role)) : ex.raw_role;
  return j;
}

/// Parses one raw record. The answer span is located by word-subsequence
/// match; the role comes from raw_role or, failing that, from srl_args.
inline QASRLExample parse_raw_record(const nlohmann::json& j) {
  QASRLExample ex;
  ex.sentence = split_words(j.at("sentence").get<std::string>());
  ex.predicate_index = j.value("predicate_index", 0);
  ex.question = split_words(j.at("question").get<std::string>());
  ex.answer_text = j.at("answer").get<std::string>();
  if (j.contains("raw_role") && !j["raw_role"].is_null()) {
    ex.raw_role = j["raw_role"].get<std::string>();
  } else if (j.contains("srl_args") && j.contains("answer_char_span")) {
    std::vector<std::pair<CharRange, std::string>> args;
    for (const auto& a : j["srl_args"]) {
      args.push_back({{a.at("span")[0].get<int>(), a.at("span")[1].get<int>()},
                      a.at("label").get<std::string>()});
    }
    CharRange ans{j["answer_char_span"][0].get<int>(), j["answer_char_span"][1].get<int>()};
    ex.raw_role = match_srl_span(ans, args).value_or("Unknown");
  } else {
    ex.raw_role = "Unknown";
  }
  ex.role = collapse_role(ex.raw_role);
  auto hits = detail::find_subsequence(ex.sentence, split_words(ex.answer_text));
  if (!hits.empty()) {
    ex.answer_span = {hits[0], hits[0] + static_cast<int>(split_words(ex.answer_text).size()) - 1};
  } else {
    ex.answer_span = {-1, -1};
  }
  return ex;
}

inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<QASRLExample> load_raw_dataset(const std::string& path) {
  std::vector<QASRLExample> out;
  for (const auto& j : read_jsonl(path)) out.push_back(parse_raw_record(j));
  return out;
}

inline void save_raw_dataset(const std::vector<QASRLExample>& examples, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  for (const auto& ex : examples) out << raw_record_json(ex).dump() << '\n';
}

/// Filter + encode a raw dataset; every dropped record is counted by reason.
inline std::pair<std::vector<EncodedExample>, SkipReport> prepare_dataset(
    const TokenizerVocab& vocab, const std::vector<QASRLExample>& raw, int max_seq) {
  SkipReport report;
  report.total = raw.size();
  std::vector<EncodedExample> out;
  for (const auto& ex : raw) {
    if (ex.answer_span.start < 0) {
      ++report.reasons["answer_not_found"];
      continue;
    }
    if (count_answer_occurrences(ex) > 1) {
      ++report.reasons["ambiguous_answer"];
      continue;
    }
    try {
      out.push_back(encode_qa(vocab, ex, max_seq));
    } catch (const SkipExample& s) {
      ++report.reasons[s.reason()];
    }
  }
  report.kept = out.size();
  return {std::move(out), report};
}

inline nlohmann::ordered_json encoded_json(const EncodedExample& e) {
  nlohmann::ordered_json j;
  j["input_ids"] = std::vector<int>(e.input_ids.begin(), e.input_ids.begin() + e.length);
  j["max_seq"] = e.input_ids.size();
  j["sep_position"] = e.sep_position;
  j["answer_start"] = e.answer_start;
  j["answer_end"] = e.answer_end;
  j["role"] = role_name(e.role);
  return j;
}

inline EncodedExample parse_encoded(const nlohmann::json& j, int pad_id = 0) {
  EncodedExample e;
  auto ids = j.at("input_ids").get<std::vector<int>>();
  auto max_seq = j.value("max_seq", static_cast<int>(ids.size()));
  if (static_cast<int>(ids.size()) > max_seq) throw ValidationError("encoded: length > max_seq");
  e.length = static_cast<int>(ids.size());
  e.input_ids = ids;
  e.input_ids.resize(static_cast<std::size_t>(max_seq), pad_id);
  e.sep_position = j.at("sep_position").get<int>();
  e.answer_start = j.at("answer_start").get<int>();
  e.answer_end = j.at("answer_end").get<int>();
  e.role = parse_role(j.at("role").get<std::string>()).value_or(CollapsedRole::Unknown);
  e.context_mask.assign(static_cast<std::size_t>(max_seq), 0);
  for (int i = e.sep_position + 1; i < e.length; ++i) e.context_mask[static_cast<std::size_t>(i)] = 1;
  if (e.answer_start <= e.sep_position || e.answer_end >= e.length || e.answer_start > e.answer_end) {
    throw ValidationError("encoded: answer outside context");
  }
  return e;
}

inline void save_encoded(const std::vector<EncodedExample>& xs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  for (const auto& e : xs) out << encoded_json(e).dump() << '\n';
}

inline std::vector<EncodedExample> load_encoded(const std::string& path, int pad_id = 0) {
  std::vector<EncodedExample> out;
  for (const auto& j : read_jsonl(path)) out.push_back(parse_encoded(j, pad_id));
  return out;
}

}  // namespace srlprobe::data
