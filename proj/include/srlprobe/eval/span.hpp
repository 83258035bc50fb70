#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "srlprobe/core/error.hpp"
#include "srlprobe/data/qasrl.hpp"
#include "srlprobe/data/roles.hpp"
#include "srlprobe/model/params.hpp"
#include "srlprobe/model/transformer.hpp"

namespace srlprobe::eval {

using data::CollapsedRole;
using data::EncodedExample;
using data::TokenSpan;

inline constexpr int kDefaultMaxAnswerLen = 30;

/// Highest-scoring (i, j) with both ends in the mask and i <= j < i + max_len.
/// Ties resolve to the smaller i, then the smaller j.
template <typename S>
TokenSpan decode_span(std::span<const S> start, std::span<const S> end, std::span<const std::uint8_t> mask,
                      int max_answer_len = kDefaultMaxAnswerLen) {
  if (start.size() != end.size() || start.size() != mask.size()) {
    throw ValidationError("decode_span: logits and mask lengths differ");
  }
  if (max_answer_len < 1) throw ValidationError("decode_span: max_answer_len must be positive");
  const int n = static_cast<int>(mask.size());
  TokenSpan best{-1, -1};
  double best_score = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const int last = std::min(n - 1, i + max_answer_len - 1);
    for (int j = i; j <= last; ++j) {
      if (!mask[static_cast<std::size_t>(j)]) continue;
      const double score = static_cast<double>(start[static_cast<std::size_t>(i)]) +
                           static_cast<double>(end[static_cast<std::size_t>(j)]);
      if (best.start < 0 || score > best_score) {
        best_score = score;
        best = {i, j};
      }
    }
  }
  if (best.start < 0) throw ValidationError("decode_span: context mask is empty");
  return best;
}

struct SpanScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline SpanScore token_f1(TokenSpan pred, TokenSpan gold) {
  if (pred.end < pred.start || gold.end < gold.start) throw ValidationError("token_f1: malformed span");
  const int overlap = std::max(0, std::min(pred.end, gold.end) - std::max(pred.start, gold.start) + 1);
  if (overlap == 0) return {};
  SpanScore s;
  s.precision = static_cast<double>(overlap) / pred.length();
  s.recall = static_cast<double>(overlap) / gold.length();
  s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

struct RoleScore {
  double f1 = 0.0;
  std::size_t n = 0;
};

struct F1Report {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t n_examples = 0;
  /// Only roles with at least one example appear; Unknown is its own bucket.
  std::map<CollapsedRole, RoleScore> per_role;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["precision"] = precision;
    j["recall"] = recall;
    j["f1"] = f1;
    j["n_examples"] = n_examples;
    nlohmann::ordered_json roles = nlohmann::ordered_json::object();
    for (const auto& [r, s] : per_role) roles[std::string(data::role_name(r))] = {{"f1", s.f1}, {"n", s.n}};
    j["per_role"] = roles;
    return j;
  }

  static F1Report from_json(const nlohmann::json& j) {
    F1Report r;
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.n_examples = j.at("n_examples").get<std::size_t>();
    if (j.contains("per_role")) {
      for (const auto& [name, s] : j.at("per_role").items()) {
        auto role = data::parse_role(name);
        if (!role) throw ValidationError("F1Report: unknown role '" + name + "'");
        r.per_role[*role] = {s.at("f1").get<double>(), s.at("n").get<std::size_t>()};
      }
    }
    return r;
  }

  /// F1 on one role, or nullopt when the role had no examples.
  std::optional<double> role_f1(CollapsedRole r) const {
    auto it = per_role.find(r);
    if (it == per_role.end()) return std::nullopt;
    return it->second.f1;
  }
};

struct ExampleScore {
  TokenSpan predicted;
  SpanScore score;
};

/// Macro average of per-example scores, with per-role means.
inline F1Report aggregate_scores(const std::vector<ExampleScore>& scores,
                                 const std::vector<EncodedExample>& examples, bool by_role) {
  if (scores.empty()) throw ValidationError("evaluate: empty dataset");
  F1Report r;
  r.n_examples = scores.size();
  std::map<CollapsedRole, double> sums;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    r.precision += scores[i].score.precision;
    r.recall += scores[i].score.recall;
    r.f1 += scores[i].score.f1;
    if (by_role) {
      auto& rs = r.per_role[examples[i].role];
      rs.n += 1;
      sums[examples[i].role] += scores[i].score.f1;
    }
  }
  const double n = static_cast<double>(scores.size());
  r.precision /= n;
  r.recall /= n;
  r.f1 /= n;
  for (auto& [role, rs] : r.per_role) rs.f1 = sums[role] / static_cast<double>(rs.n);
  return r;
}

/// Predicted spans for a dataset, in batches of `batch_size` sequences.
template <typename T>
std::vector<ExampleScore> score_examples(const model::TransformerParams<T>& p,
                                         const std::vector<EncodedExample>& examples,
                                         int max_answer_len = kDefaultMaxAnswerLen, int batch_size = 64) {
  std::vector<ExampleScore> out;
  out.reserve(examples.size());
  model::ForwardOptions opt;
  opt.want_lm = false;
  for (std::size_t b0 = 0; b0 < examples.size(); b0 += static_cast<std::size_t>(batch_size)) {
    const std::size_t b1 = std::min(examples.size(), b0 + static_cast<std::size_t>(batch_size));
    model::PackedBatch batch;
    for (std::size_t i = b0; i < b1; ++i) {
      batch.add(std::span<const int>(examples[i].input_ids.data(), static_cast<std::size_t>(examples[i].length)));
    }
    auto fwd = model::forward(p, batch, opt);
    for (std::size_t i = b0; i < b1; ++i) {
      const auto& ex = examples[i];
      const int off = batch.begin(static_cast<int>(i - b0));
      const auto len = static_cast<std::size_t>(ex.length);
      auto pred = decode_span(std::span<const T>(fwd.qa_start.data() + off, len),
                              std::span<const T>(fwd.qa_end.data() + off, len),
                              std::span<const std::uint8_t>(ex.context_mask.data(), len), max_answer_len);
      out.push_back({pred, token_f1(pred, {ex.answer_start, ex.answer_end})});
    }
  }
  return out;
}

template <typename T>
F1Report evaluate(const model::TransformerParams<T>& p, const std::vector<EncodedExample>& examples,
                  bool by_role = true, int max_answer_len = kDefaultMaxAnswerLen) {
  if (examples.empty()) throw ValidationError("evaluate: empty dataset");
  return aggregate_scores(score_examples(p, examples, max_answer_len), examples, by_role);
}

/// Examples whose gold role is `r`.
inline std::vector<EncodedExample> role_subset(const std::vector<EncodedExample>& xs, CollapsedRole r) {
  std::vector<EncodedExample> out;
  for (const auto& x : xs) {
    if (x.role == r) out.push_back(x);
  }
  return out;
}

}  // namespace srlprobe::eval
