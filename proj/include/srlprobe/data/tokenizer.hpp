#pragma once

#include <cctype>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "srlprobe/data/vocab.hpp"

namespace srlprobe::data {

namespace detail {

inline bool is_punct(unsigned char c) { return std::ispunct(c) != 0; }

/// Lowercases and splits on whitespace; ASCII punctuation becomes its own word.
inline std::vector<std::string> basic_split(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) words.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (is_punct(c) && c != '[' && c != ']') {
      flush();
      words.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return words;
}

}  // namespace detail

/// Greedy longest-match WordPiece segmentation of a single (already
/// lowercased) word. A word that cannot be fully covered maps to [UNK].
inline std::vector<int> wordpiece(const TokenizerVocab& vocab, std::string_view word) {
  if (auto whole = vocab.find(word)) return {*whole};
  std::vector<int> out;
  std::size_t start = 0;
  while (start < word.size()) {
    std::size_t end = word.size();
    std::optional<int> hit;
    while (end > start) {
      std::string cand(word.substr(start, end - start));
      if (start > 0) cand.insert(0, kContinuationPrefix);
      if ((hit = vocab.find(cand))) break;
      --end;
    }
    if (!hit) return {vocab.unk_id()};
    out.push_back(*hit);
    start = end;
  }
  return out;
}

inline std::vector<int> tokenize(const TokenizerVocab& vocab, std::string_view text) {
  std::vector<int> ids;
  for (const auto& w : detail::basic_split(text)) {
    // Bracketed special tokens pass through verbatim.
    if (w.size() > 2 && w.front() == '[' && w.back() == ']') {
      std::string upper = w;
      for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (auto id = vocab.find(upper)) {
        ids.push_back(*id);
        continue;
      }
    }
    auto pieces = wordpiece(vocab, w);
    ids.insert(ids.end(), pieces.begin(), pieces.end());
  }
  return ids;
}

/// Joins pieces with spaces, gluing "##" continuations onto the previous piece.
inline std::string decode(const TokenizerVocab& vocab, std::span<const int> ids) {
  std::string out;
  for (int id : ids) {
    const auto& p = vocab.piece(id);
    if (p.starts_with(kContinuationPrefix)) {
      out += p.substr(kContinuationPrefix.size());
    } else {
      if (!out.empty()) out.push_back(' ');
      out += p;
    }
  }
  return out;
}

}  // namespace srlprobe::data
