#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dreammem/dataset.hpp"

namespace dreammem {

inline constexpr std::string_view kPromptSeparator = ", ";
inline constexpr std::string_view kDefaultStyleToken = "mem10kstyle";

struct ModifierEntry {
  std::string id;
  std::vector<std::string> trigger_keywords;
  std::string text;
};

/// Exactly three prompt modifiers plus the fallback used when none triggers.
class ModifierTable {
 public:
  ModifierTable(std::vector<ModifierEntry> entries, std::string default_id);

  /// indoor / outdoor / object-close-up, default outdoor.
  static ModifierTable defaults();

  const std::vector<ModifierEntry>& entries() const { return entries_; }
  const std::string& default_id() const { return default_id_; }
  const ModifierEntry& entry(std::string_view id) const;

 private:
  std::vector<ModifierEntry> entries_;
  std::string default_id_;
};

struct PromptParts {
  std::vector<std::string> action_labels;
  std::string caption;
  std::string modifier_id;
  std::string modifier_text;
  std::string style_token;

  bool operator==(const PromptParts&) const = default;
};

struct Prompt {
  PromptParts parts;
  std::string text;
};

/// First table entry (in order) with a keyword occurring as a whole word,
/// case-insensitively, in the caption or any label; otherwise the default.
std::string select_modifier(std::string_view caption, const std::vector<std::string>& action_labels,
                            const ModifierTable& table);

/// "<labels joined by ', '>, <first caption>, <modifier text>, <style token>",
/// without the leading segment when there are no labels. Throws
/// ValidationError if any field contains the separator.
Prompt build_prompt(const VideoRecord& record, const ModifierTable& table,
                    std::string_view style_token = kDefaultStyleToken);

/// Inverse of build_prompt for the same table and token.
PromptParts parse_prompt(std::string_view text, const ModifierTable& table,
                         std::string_view style_token = kDefaultStyleToken);

void validate_style_token(std::string_view token);

}  // namespace dreammem
