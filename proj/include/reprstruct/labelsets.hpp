#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "reprstruct/error.hpp"

namespace reprstruct {

inline constexpr std::size_t kDefaultMinCount = 10;
inline constexpr const char* kBeginOfSentence = "<BOS>";

/// One sentence as fed to the model. `labels` carries optional extra per-token
/// label columns (e.g. a synthetic context id) that can be used as custom sets.
struct SentenceRecord {
  std::int64_t sentence_id = 0;
  std::vector<std::string> tokens;
  std::optional<std::vector<std::string>> pos;
  std::map<std::string, std::vector<std::string>> labels;

  friend bool operator==(const SentenceRecord&, const SentenceRecord&) = default;
};

inline std::size_t total_tokens(const std::vector<SentenceRecord>& records) {
  std::size_t n = 0;
  for (const auto& r : records) n += r.tokens.size();
  return n;
}

enum class LabelKind { token, pos, bigram, custom };

inline std::string kind_name(LabelKind kind) {
  switch (kind) {
    case LabelKind::token: return "token";
    case LabelKind::pos: return "pos";
    case LabelKind::bigram: return "bigram";
    case LabelKind::custom: return "custom";
  }
  return "custom";
}

/// A categorical label per batch row. Ids are dense and assigned in order of
/// first occurrence, so identical inputs always produce identical ids.
struct LabelSet {
  std::string name;
  LabelKind kind = LabelKind::custom;
  std::vector<std::uint32_t> row_labels;
  std::vector<std::string> vocab;
  std::vector<std::size_t> counts;

  std::size_t rows() const noexcept { return row_labels.size(); }
  std::size_t size() const noexcept { return vocab.size(); }

  std::optional<std::uint32_t> find(const std::string& label) const {
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      if (vocab[i] == label) return static_cast<std::uint32_t>(i);
    }
    return std::nullopt;
  }
};

/// Incrementally assigns dense ids to labels in first-occurrence order.
template <typename Key = std::string>
class LabelSetBuilder {
 public:
  LabelSetBuilder(std::string name, LabelKind kind) {
    set_.name = std::move(name);
    set_.kind = kind;
  }

  void add(const Key& key, const std::string& display) {
    auto [it, inserted] = ids_.try_emplace(key, static_cast<std::uint32_t>(set_.vocab.size()));
    if (inserted) {
      set_.vocab.push_back(display);
      set_.counts.push_back(0);
    }
    set_.row_labels.push_back(it->second);
    ++set_.counts[it->second];
  }
  void add(const Key& key) requires std::is_same_v<Key, std::string> { add(key, key); }

  LabelSet finish() && { return std::move(set_); }

 private:
  LabelSet set_;
  std::map<Key, std::uint32_t> ids_;
};

namespace detail {
inline void require_records(const std::vector<SentenceRecord>& records) {
  if (records.empty()) fail(ErrorCode::invalid_data, "no sentence records");
}
}  // namespace detail

inline LabelSet build_token_labels(const std::vector<SentenceRecord>& records) {
  detail::require_records(records);
  LabelSetBuilder builder("token", LabelKind::token);
  for (const auto& r : records) {
    for (const auto& t : r.tokens) builder.add(t);
  }
  return std::move(builder).finish();
}

inline LabelSet build_pos_labels(const std::vector<SentenceRecord>& records) {
  detail::require_records(records);
  LabelSetBuilder builder("pos", LabelKind::pos);
  for (const auto& r : records) {
    if (!r.pos) {
      fail(ErrorCode::missing_labels, "sentence_id " + std::to_string(r.sentence_id) + " has no pos tags");
    }
    if (r.pos->size() != r.tokens.size()) {
      fail(ErrorCode::alignment_error, "sentence_id " + std::to_string(r.sentence_id) + " has " +
                                           std::to_string(r.pos->size()) + " pos tags for " +
                                           std::to_string(r.tokens.size()) + " tokens");
    }
    for (const auto& t : *r.pos) builder.add(t);
  }
  return std::move(builder).finish();
}

/// Labels each token by its left bigram (previous token, token); the first
/// token of a sentence pairs with <BOS>.
inline LabelSet derive_bigram_labels(const std::vector<SentenceRecord>& records) {
  detail::require_records(records);
  // Key on (left, right) strings so tokens containing spaces cannot collide.
  using Pair = std::pair<std::optional<std::string>, std::string>;
  LabelSetBuilder<Pair> builder("bigram", LabelKind::bigram);
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.tokens.size(); ++i) {
      std::optional<std::string> left;
      if (i > 0) left = r.tokens[i - 1];
      std::string display = (left ? *left : std::string(kBeginOfSentence)) + " " + r.tokens[i];
      builder.add(Pair{left, r.tokens[i]}, display);
    }
  }
  return std::move(builder).finish();
}

/// Builds a set from an extra per-token label column carried by the records.
inline LabelSet build_custom_labels(const std::vector<SentenceRecord>& records, const std::string& name) {
  detail::require_records(records);
  LabelSetBuilder builder(name, LabelKind::custom);
  for (const auto& r : records) {
    auto it = r.labels.find(name);
    if (it == r.labels.end()) {
      fail(ErrorCode::missing_labels,
           "sentence_id " + std::to_string(r.sentence_id) + " has no '" + name + "' labels");
    }
    if (it->second.size() != r.tokens.size()) {
      fail(ErrorCode::alignment_error, "sentence_id " + std::to_string(r.sentence_id) + " has " +
                                           std::to_string(it->second.size()) + " '" + name + "' labels for " +
                                           std::to_string(r.tokens.size()) + " tokens");
    }
    for (const auto& t : it->second) builder.add(t);
  }
  return std::move(builder).finish();
}

inline LabelSet build_sentence_labels(const std::vector<SentenceRecord>& records) {
  detail::require_records(records);
  LabelSetBuilder<std::int64_t> builder("sentence", LabelKind::custom);
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.tokens.size(); ++i) builder.add(r.sentence_id, std::to_string(r.sentence_id));
  }
  return std::move(builder).finish();
}

/// Labels each token by its 0-based position within its sentence.
inline LabelSet build_position_labels(const std::vector<SentenceRecord>& records) {
  detail::require_records(records);
  LabelSetBuilder<std::size_t> builder("position", LabelKind::custom);
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.tokens.size(); ++i) builder.add(i, std::to_string(i));
  }
  return std::move(builder).finish();
}

/// Resolves a set name: token, pos, bigram, sentence, position, or a custom
/// label column.
inline LabelSet build_label_set(const std::vector<SentenceRecord>& records, const std::string& name) {
  if (name == "token") return build_token_labels(records);
  if (name == "pos") return build_pos_labels(records);
  if (name == "bigram") return derive_bigram_labels(records);
  if (name == "sentence") return build_sentence_labels(records);
  if (name == "position") return build_position_labels(records);
  return build_custom_labels(records, name);
}

/// Builds a set directly from per-row label ids (dense or not); ids are
/// remapped in first-occurrence order.
inline LabelSet label_set_from_ids(std::string name, const std::vector<std::uint32_t>& ids) {
  LabelSetBuilder<std::uint32_t> builder(std::move(name), LabelKind::custom);
  for (auto id : ids) builder.add(id, std::to_string(id));
  return std::move(builder).finish();
}

struct ExcludedLabel {
  std::uint32_t id = 0;
  std::string label;
  std::size_t count = 0;
};

/// Labels taking part in per-label aggregation. Excluded labels keep their
/// rows in the batch; they only drop out of the label average.
struct LabelFilter {
  std::vector<std::uint32_t> included;
  std::vector<ExcludedLabel> excluded;
};

inline LabelFilter filter_min_count(const LabelSet& set, std::size_t min_count) {
  if (min_count < 1) fail(ErrorCode::invalid_parameter, "min_count must be at least 1");
  LabelFilter filter;
  for (std::size_t id = 0; id < set.size(); ++id) {
    if (set.counts[id] >= min_count) {
      filter.included.push_back(static_cast<std::uint32_t>(id));
    } else {
      filter.excluded.push_back({static_cast<std::uint32_t>(id), set.vocab[id], set.counts[id]});
    }
  }
  if (filter.included.empty()) {
    fail(ErrorCode::empty_labelset, "label set '" + set.name + "' has no label with at least " +
                                        std::to_string(min_count) + " occurrences");
  }
  return filter;
}

}  // namespace reprstruct
