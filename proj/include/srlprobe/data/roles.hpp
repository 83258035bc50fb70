#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace srlprobe::data {

/// Collapsed PropBank role inventory used by every role-conditioned analysis.
enum class CollapsedRole : int {
  Arg0Agent = 0,
  Arg1Theme,
  Arg2Other,
  ArgmLoc,
  ArgmTmp,
  ArgmMnr,
  ArgmCau,
  ArgmDir,
  Unknown,
};

inline constexpr int kNumRoles = 9;
inline constexpr int kNumNamedRoles = 8;

inline constexpr std::array<CollapsedRole, kNumRoles> kAllRoles = {
    CollapsedRole::Arg0Agent, CollapsedRole::Arg1Theme, CollapsedRole::Arg2Other,
    CollapsedRole::ArgmLoc,   CollapsedRole::ArgmTmp,   CollapsedRole::ArgmMnr,
    CollapsedRole::ArgmCau,   CollapsedRole::ArgmDir,   CollapsedRole::Unknown};

inline constexpr std::string_view role_name(CollapsedRole r) {
  switch (r) {
    case CollapsedRole::Arg0Agent: return "ARG0-Agent";
    case CollapsedRole::Arg1Theme: return "ARG1-Theme";
    case CollapsedRole::Arg2Other: return "ARG2-Other";
    case CollapsedRole::ArgmLoc: return "ARGM-LOC";
    case CollapsedRole::ArgmTmp: return "ARGM-TMP";
    case CollapsedRole::ArgmMnr: return "ARGM-MNR";
    case CollapsedRole::ArgmCau: return "ARGM-CAU";
    case CollapsedRole::ArgmDir: return "ARGM-DIR";
    case CollapsedRole::Unknown: return "Unknown";
  }
  return "Unknown";
}

inline constexpr int role_index(CollapsedRole r) { return static_cast<int>(r); }

/// Maps a raw SRL label (or an already collapsed name) onto the collapsed
/// inventory. Total: anything unrecognised is Unknown.
inline CollapsedRole collapse_role(std::string_view raw) {
  for (auto r : kAllRoles) {
    if (raw == role_name(r)) return r;
  }
  // Reference / continuation markers refer to the same argument.
  if (raw.starts_with("R-") || raw.starts_with("C-")) raw.remove_prefix(2);

  auto base_is = [&](std::string_view base) {
    return raw == base || (raw.starts_with(base) && raw.size() > base.size() &&
                           raw[base.size()] == '-');
  };
  if (base_is("ARG0")) return CollapsedRole::Arg0Agent;
  if (base_is("ARG1")) return CollapsedRole::Arg1Theme;
  if (base_is("ARG2") || base_is("ARG3") || base_is("ARG4") || base_is("ARG5") ||
      raw == "ARGM-ADV" || raw == "ARGM-PRD" || raw == "ARGM-PRP" || raw == "ARGM-PNC") {
    return CollapsedRole::Arg2Other;
  }
  if (raw == "ARGM-LOC") return CollapsedRole::ArgmLoc;
  if (raw == "ARGM-TMP") return CollapsedRole::ArgmTmp;
  if (raw == "ARGM-MNR") return CollapsedRole::ArgmMnr;
  if (raw == "ARGM-CAU") return CollapsedRole::ArgmCau;
  if (raw == "ARGM-DIR") return CollapsedRole::ArgmDir;
  return CollapsedRole::Unknown;
}

inline std::optional<CollapsedRole> parse_role(std::string_view name) {
  for (auto r : kAllRoles) {
    if (name == role_name(r)) return r;
  }
  return std::nullopt;
}

}  // namespace srlprobe::data
