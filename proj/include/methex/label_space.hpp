#pragma once

// Coarse BIO labels, the seven method categories, and the factored
// <indicator, category> label inventories built from them.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "methex/error.hpp"

namespace methex {

enum class CoarseLabel : std::uint8_t { B, I, O };

inline constexpr std::array<CoarseLabel, 3> kCoarseLabels = {CoarseLabel::B, CoarseLabel::I,
                                                            CoarseLabel::O};

inline std::string_view to_string(CoarseLabel l) {
  switch (l) {
    case CoarseLabel::B: return "B";
    case CoarseLabel::I: return "I";
    case CoarseLabel::O: return "O";
  }
  return "?";
}

inline CoarseLabel parse_coarse_label(std::string_view s) {
  if (s == "B") return CoarseLabel::B;
  if (s == "I") return CoarseLabel::I;
  if (s == "O") return CoarseLabel::O;
  throw ParseError("not a BIO label: '" + std::string(s) + "'");
}

// Categories in canonical (alphabetical) order; the order fixes label indices.
enum class Category : std::uint8_t { AUDIO, CV, GEN, GRAPH, NLP, RL, SEQ };

inline constexpr std::size_t kNumCategories = 7;
inline constexpr std::array<Category, kNumCategories> kCategories = {
    Category::AUDIO, Category::CV, Category::GEN, Category::GRAPH,
    Category::NLP,   Category::RL, Category::SEQ};

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::AUDIO: return "AUDIO";
    case Category::CV: return "CV";
    case Category::GEN: return "GEN";
    case Category::GRAPH: return "GRAPH";
    case Category::NLP: return "NLP";
    case Category::RL: return "RL";
    case Category::SEQ: return "SEQ";
  }
  return "?";
}

inline std::optional<Category> try_parse_category(std::string_view s) {
  for (Category c : kCategories)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

inline Category parse_category(std::string_view s) {
  if (auto c = try_parse_category(s)) return *c;
  throw UnknownCategory("unknown category '" + std::string(s) + "'");
}

// The category component of a fine label. The seven categories map onto the
// first seven values; REST stands for the merged non-generic categories and
// None marks a label that carries no category (coarse labels, collapsed O).
enum class Group : std::uint8_t { AUDIO, CV, GEN, GRAPH, NLP, RL, SEQ, REST, None };

inline constexpr Group as_group(Category c) { return static_cast<Group>(c); }

inline std::string_view to_string(Group g) {
  if (g == Group::REST) return "REST";
  if (g == Group::None) return "";
  return to_string(static_cast<Category>(g));
}

inline Group parse_group(std::string_view s) {
  if (s == "REST") return Group::REST;
  return as_group(parse_category(s));
}

// GEN stays GEN, every other category merges into REST.
inline constexpr Group coarsen_category(Category c) {
  return c == Category::GEN ? Group::GEN : Group::REST;
}

enum class Routing : std::uint8_t { fine7, binary };

inline Group route(Category c, Routing r) {
  return r == Routing::fine7 ? as_group(c) : coarsen_category(c);
}

inline std::vector<Group> routing_groups(Routing r) {
  if (r == Routing::binary) return {Group::GEN, Group::REST};
  std::vector<Group> out;
  for (Category c : kCategories) out.push_back(as_group(c));
  return out;
}

inline std::string_view to_string(Routing r) { return r == Routing::fine7 ? "fine7" : "binary"; }

struct FineLabel {
  CoarseLabel indicator = CoarseLabel::O;
  Group group = Group::None;

  friend bool operator==(const FineLabel&, const FineLabel&) = default;
};

inline std::string to_string(const FineLabel& l) {
  std::string s(to_string(l.indicator));
  if (l.group != Group::None) {
    s += '-';
    s += to_string(l.group);
  }
  return s;
}

inline FineLabel parse_fine_label(std::string_view s) {
  auto dash = s.find('-');
  if (dash == std::string_view::npos) return {parse_coarse_label(s), Group::None};
  return {parse_coarse_label(s.substr(0, dash)), parse_group(s.substr(dash + 1))};
}

enum class SchemeKind : std::uint8_t { coarse, fine, fine_binary };

inline std::string_view to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::coarse: return "coarse";
    case SchemeKind::fine: return "fine";
    case SchemeKind::fine_binary: return "fine-binary";
  }
  return "?";
}

inline SchemeKind parse_scheme_kind(std::string_view s) {
  if (s == "coarse") return SchemeKind::coarse;
  if (s == "fine") return SchemeKind::fine;
  if (s == "fine-binary") return SchemeKind::fine_binary;
  throw ParseError("unknown label scheme '" + std::string(s) + "'");
}

// A label inventory with a bijective label <-> index mapping.
//
// Fine inventories are group-major: for each group in canonical order the
// labels B, I, O. With collapse_o the per-group O labels are replaced by a
// single ungrouped O placed last.
class LabelScheme {
 public:
  explicit LabelScheme(SchemeKind kind = SchemeKind::coarse, bool collapse_o = false)
      : kind_(kind), collapse_o_(kind != SchemeKind::coarse && collapse_o) {
    if (kind_ == SchemeKind::coarse) {
      for (CoarseLabel l : kCoarseLabels) inventory_.push_back({l, Group::None});
    } else {
      std::vector<Group> groups = kind_ == SchemeKind::fine ? routing_groups(Routing::fine7)
                                                           : routing_groups(Routing::binary);
      for (Group g : groups) {
        inventory_.push_back({CoarseLabel::B, g});
        inventory_.push_back({CoarseLabel::I, g});
        if (!collapse_o_) inventory_.push_back({CoarseLabel::O, g});
      }
      if (collapse_o_) inventory_.push_back({CoarseLabel::O, Group::None});
    }
    for (std::size_t i = 0; i < inventory_.size(); ++i) index_.emplace(key(inventory_[i]), i);
  }

  static LabelScheme coarse() { return LabelScheme(SchemeKind::coarse); }
  static LabelScheme fine(bool collapse_o = false) { return LabelScheme(SchemeKind::fine, collapse_o); }
  static LabelScheme fine_binary(bool collapse_o = false) {
    return LabelScheme(SchemeKind::fine_binary, collapse_o);
  }

  SchemeKind kind() const { return kind_; }
  bool collapse_o() const { return collapse_o_; }
  bool is_fine() const { return kind_ != SchemeKind::coarse; }
  std::size_t size() const { return inventory_.size(); }
  const std::vector<FineLabel>& inventory() const { return inventory_; }
  const FineLabel& label(std::size_t i) const { return inventory_.at(i); }

  std::optional<std::size_t> find(const FineLabel& l) const {
    auto it = index_.find(key(l));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index(const FineLabel& l) const {
    if (auto i = find(l)) return *i;
    throw SchemeMismatch("label '" + to_string(l) + "' is not in the " +
                         std::string(to_string(kind_)) + " scheme");
  }

  std::size_t index(CoarseLabel l) const { return index(FineLabel{l, Group::None}); }

  // Maps a document category to the group used by this scheme's labels.
  Group group_for(Category c) const {
    switch (kind_) {
      case SchemeKind::coarse: return Group::None;
      case SchemeKind::fine: return as_group(c);
      case SchemeKind::fine_binary: return coarsen_category(c);
    }
    return Group::None;
  }

  std::string descriptor() const {
    std::string s(to_string(kind_));
    if (collapse_o_) s += "+collapse-O";
    return s;
  }

  static LabelScheme from_descriptor(std::string_view d) {
    constexpr std::string_view suffix = "+collapse-O";
    bool collapse = d.size() > suffix.size() && d.substr(d.size() - suffix.size()) == suffix;
    if (collapse) d.remove_suffix(suffix.size());
    return LabelScheme(parse_scheme_kind(d), collapse);
  }

  friend bool operator==(const LabelScheme& a, const LabelScheme& b) {
    return a.kind_ == b.kind_ && a.collapse_o_ == b.collapse_o_;
  }

 private:
  static int key(const FineLabel& l) {
    return static_cast<int>(l.indicator) * 16 + static_cast<int>(l.group);
  }

  SchemeKind kind_;
  bool collapse_o_;
  std::vector<FineLabel> inventory_;
  std::unordered_map<int, std::size_t> index_;
};

inline std::vector<FineLabel> expand_labels(std::span<const CoarseLabel> labels, Category category,
                                            const LabelScheme& scheme) {
  if (!scheme.is_fine())
    throw SchemeMismatch("expand_labels needs a fine or fine-binary scheme");
  const Group g = scheme.group_for(category);
  std::vector<FineLabel> out;
  out.reserve(labels.size());
  for (CoarseLabel l : labels) {
    if (l == CoarseLabel::O && scheme.collapse_o())
      out.push_back({l, Group::None});
    else
      out.push_back({l, g});
  }
  return out;
}

inline std::vector<CoarseLabel> project_labels(std::span<const FineLabel> labels) {
  std::vector<CoarseLabel> out;
  out.reserve(labels.size());
  for (const FineLabel& l : labels) out.push_back(l.indicator);
  return out;
}

// No I at position 0 and no I directly after O.
inline bool is_bio_valid(std::span<const CoarseLabel> labels) {
  CoarseLabel prev = CoarseLabel::O;
  for (CoarseLabel l : labels) {
    if (l == CoarseLabel::I && prev == CoarseLabel::O) return false;
    prev = l;
  }
  return true;
}

// Fine variant: additionally an I must continue a span of its own group.
inline bool is_bio_valid(std::span<const FineLabel> labels) {
  const FineLabel* prev = nullptr;
  for (const FineLabel& l : labels) {
    if (l.indicator == CoarseLabel::I) {
      if (!prev || prev->indicator == CoarseLabel::O || prev->group != l.group) return false;
    }
    prev = &l;
  }
  return true;
}

inline std::vector<CoarseLabel> parse_coarse_labels(std::span<const std::string> labels) {
  std::vector<CoarseLabel> out;
  out.reserve(labels.size());
  for (const auto& s : labels) out.push_back(parse_coarse_label(s));
  return out;
}

}  // namespace methex
