#pragma once

#include <cctype>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "srlprobe/core/error.hpp"

namespace srlprobe::data {

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kContinuationPrefix = "##";

/// Fixed subword vocabulary. Token id is the line index in the vocab file.
class TokenizerVocab {
 public:
  TokenizerVocab() = default;

  /// Builds a vocab from an ordered entry list; throws ValidationError on a
  /// duplicate entry or a missing [PAD]/[UNK]/[SEP].
  static TokenizerVocab from_entries(std::vector<std::string> entries) {
    TokenizerVocab v;
    v.entries_ = std::move(entries);
    v.index_.reserve(v.entries_.size());
    for (std::size_t i = 0; i < v.entries_.size(); ++i) {
      auto [it, inserted] = v.index_.emplace(v.entries_[i], static_cast<int>(i));
      if (!inserted) {
        throw ValidationError("vocab: duplicate entry '" + v.entries_[i] + "' at line " +
                              std::to_string(i + 1) + " (first seen at line " +
                              std::to_string(it->second + 1) + ")");
      }
    }
    auto require = [&](std::string_view tok) {
      auto id = v.find(tok);
      if (!id) throw ValidationError("vocab: missing special token " + std::string(tok));
      return *id;
    };
    v.pad_id_ = require(kPadToken);
    v.unk_id_ = require(kUnkToken);
    v.sep_id_ = require(kSepToken);
    v.cls_id_ = v.find(kClsToken);
    return v;
  }

  std::optional<int> find(std::string_view piece) const {
    auto it = index_.find(std::string(piece));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& piece(int id) const { return entries_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& entries() const noexcept { return entries_; }
  int size() const noexcept { return static_cast<int>(entries_.size()); }
  int pad_id() const noexcept { return pad_id_; }
  int unk_id() const noexcept { return unk_id_; }
  int sep_id() const noexcept { return sep_id_; }
  std::optional<int> cls_id() const noexcept { return cls_id_; }

  bool is_special(int id) const noexcept {
    return id == pad_id_ || id == unk_id_ || id == sep_id_ || (cls_id_ && id == *cls_id_);
  }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, int> index_;
  int pad_id_ = -1;
  int unk_id_ = -1;
  int sep_id_ = -1;
  std::optional<int> cls_id_;
};

inline TokenizerVocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("vocab: cannot open " + path);
  std::vector<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    entries.push_back(line);
  }
  // A trailing newline after the last token is not an empty entry.
  while (!entries.empty() && entries.back().empty()) entries.pop_back();
  return TokenizerVocab::from_entries(std::move(entries));
}

inline void save_vocab(const TokenizerVocab& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("vocab: cannot write " + path);
  for (const auto& e : vocab.entries()) out << e << '\n';
}

}  // namespace srlprobe::data
