#include "dreammem/prompt_forge.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

#include "dreammem/common.hpp"

namespace dreammem {

namespace {

void reject_separator(std::string_view field, std::string_view what) {
  if (field.find(kPromptSeparator) != std::string_view::npos)
    throw ValidationError(std::string(what) + " contains the prompt separator \", \": \"" +
                          std::string(field) + "\"");
}

bool contains_phrase(const std::vector<std::string>& haystack,
                     const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), phrase.begin(), phrase.end()) !=
         haystack.end();
}

std::vector<std::string_view> split_segments(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = text.find(kPromptSeparator, start);
    if (pos == std::string_view::npos) {
      out.push_back(text.substr(start));
      return out;
    }
    out.push_back(text.substr(start, pos - start));
    start = pos + kPromptSeparator.size();
  }
}

}  // namespace

ModifierTable::ModifierTable(std::vector<ModifierEntry> entries, std::string default_id)
    : entries_(std::move(entries)), default_id_(std::move(default_id)) {
  if (entries_.size() != 3)
    throw ValidationError("modifier table needs exactly 3 entries, got " +
                          std::to_string(entries_.size()));
  std::unordered_set<std::string> ids;
  std::unordered_set<std::string> texts;
  for (const auto& e : entries_) {
    if (e.id.empty()) throw ValidationError("modifier id must be nonempty");
    if (!ids.insert(e.id).second) throw ValidationError("duplicate modifier id " + e.id);
    if (canonicalize_whitespace(e.text).empty())
      throw ValidationError("modifier " + e.id + " has empty text");
    reject_separator(e.text, "modifier text");
    if (!texts.insert(e.text).second) throw ValidationError("duplicate modifier text " + e.text);
  }
  if (!ids.contains(default_id_))
    throw ValidationError("default modifier '" + default_id_ + "' is not a table entry");
}

ModifierTable ModifierTable::defaults() {
  return ModifierTable(
      {
          {"indoor",
           {"kitchen", "office", "classroom", "bedroom", "room", "house", "indoors", "inside"},
           "a candid indoor photograph"},
          {"outdoor",
           {"park", "beach", "street", "forest", "garden", "river", "stadium", "market", "outside",
            "outdoors"},
           "a candid outdoor photograph"},
          {"object", {"closeup", "close up", "hands", "toy", "tool"},
           "a close-up photograph of an object"},
      },
      "outdoor");
}

const ModifierEntry& ModifierTable::entry(std::string_view id) const {
  for (const auto& e : entries_)
    if (e.id == id) return e;
  throw ValidationError("unknown modifier id '" + std::string(id) + "'");
}

void validate_style_token(std::string_view token) {
  if (token.empty()) throw ValidationError("style token must be nonempty");
  for (char c : token)
    if (c == ',' || std::isspace(static_cast<unsigned char>(c)))
      throw ValidationError("style token must not contain separator characters");
}

std::string select_modifier(std::string_view caption, const std::vector<std::string>& action_labels,
                            const ModifierTable& table) {
  std::vector<std::vector<std::string>> fields;
  fields.push_back(word_tokens(caption));
  for (const auto& l : action_labels) fields.push_back(word_tokens(l));

  for (const auto& e : table.entries()) {
    for (const auto& kw : e.trigger_keywords) {
      const auto phrase = word_tokens(kw);
      for (const auto& f : fields)
        if (contains_phrase(f, phrase)) return e.id;
    }
  }
  return table.default_id();
}

Prompt build_prompt(const VideoRecord& record, const ModifierTable& table,
                    std::string_view style_token) {
  validate_style_token(style_token);
  validate_record(record);
  Prompt p;
  p.parts.action_labels = record.action_labels;
  p.parts.caption = record.captions.front();
  p.parts.modifier_id = select_modifier(p.parts.caption, p.parts.action_labels, table);
  p.parts.modifier_text = table.entry(p.parts.modifier_id).text;
  p.parts.style_token = std::string(style_token);

  reject_separator(p.parts.caption, "caption of " + record.id);
  for (const auto& l : p.parts.action_labels) reject_separator(l, "action label of " + record.id);

  for (const auto& l : p.parts.action_labels) {
    p.text += l;
    p.text += kPromptSeparator;
  }
  p.text += p.parts.caption;
  p.text += kPromptSeparator;
  p.text += p.parts.modifier_text;
  p.text += kPromptSeparator;
  p.text += p.parts.style_token;
  return p;
}

PromptParts parse_prompt(std::string_view text, const ModifierTable& table,
                         std::string_view style_token) {
  const auto segments = split_segments(text);
  if (segments.size() < 2 || segments.back() != style_token)
    throw ValidationError("prompt does not end with style token '" + std::string(style_token) +
                          "'");
  if (segments.size() < 3) throw ValidationError("prompt has no caption segment");

  PromptParts parts;
  parts.style_token = std::string(style_token);
  const std::string_view modifier = segments[segments.size() - 2];
  for (const auto& e : table.entries()) {
    if (e.text == modifier) {
      parts.modifier_id = e.id;
      parts.modifier_text = e.text;
      break;
    }
  }
  if (parts.modifier_id.empty())
    throw ValidationError("no configured modifier text in penultimate segment: \"" +
                          std::string(modifier) + "\"");
  parts.caption = std::string(segments[segments.size() - 3]);
  if (parts.caption.empty()) throw ValidationError("prompt has an empty caption");
  for (std::size_t i = 0; i + 3 < segments.size(); ++i)
    parts.action_labels.emplace_back(segments[i]);
  return parts;
}

}  // namespace dreammem
