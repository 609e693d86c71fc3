#pragma once

#include <optional>
#include <string>
#include <vector>

#include "deid/corpus.hpp"

namespace deid {

enum class Bio : uint8_t { O, B, I };

/// BIO2 token label: O, or B-/I- paired with a PHI type.
struct TokenLabel {
  Bio bio = Bio::O;
  PhiType type = PhiType::Zip;  // meaningful only when bio != O

  static TokenLabel outside() { return {}; }
  static TokenLabel begin(PhiType t) { return {Bio::B, t}; }
  static TokenLabel inside(PhiType t) { return {Bio::I, t}; }

  bool is_phi() const { return bio != Bio::O; }

  bool operator==(const TokenLabel& o) const {
    return bio == o.bio && (bio == Bio::O || type == o.type);
  }

  std::string to_string() const {
    if (bio == Bio::O) return "O";
    return std::string(bio == Bio::B ? "B-" : "I-") + phi_type_name(type);
  }

  static std::optional<TokenLabel> parse(std::string_view s) {
    if (s == "O") return outside();
    if (s.size() < 3 || s[1] != '-') return std::nullopt;
    auto t = parse_phi_type(s.substr(2));
    if (!t) return std::nullopt;
    if (s[0] == 'B') return begin(*t);
    if (s[0] == 'I') return inside(*t);
    return std::nullopt;
  }
};

/// Fixed label ordering shared by the tagger and checkpoints: O first, then
/// B-/I- per PHI type in report order (25 labels), plus synthetic START/END
/// transition indices after the real labels.
class LabelSet {
 public:
  LabelSet() {
    names_.push_back("O");
    for (size_t i = 0; i < kNumPhiTypes; ++i) {
      auto t = static_cast<PhiType>(i);
      names_.push_back(std::string("B-") + phi_type_name(t));
      names_.push_back(std::string("I-") + phi_type_name(t));
    }
  }

  size_t size() const { return names_.size(); }
  size_t start_index() const { return size(); }
  size_t end_index() const { return size() + 1; }
  const std::vector<std::string>& names() const { return names_; }

  int id(const TokenLabel& l) const {
    if (l.bio == Bio::O) return 0;
    return 1 + 2 * static_cast<int>(l.type) + (l.bio == Bio::I ? 1 : 0);
  }

  TokenLabel label(int id) const {
    require(id >= 0 && static_cast<size_t>(id) < size(), "LabelSet: id out of range");
    if (id == 0) return TokenLabel::outside();
    int k = id - 1;
    auto t = static_cast<PhiType>(k / 2);
    return (k % 2 == 0) ? TokenLabel::begin(t) : TokenLabel::inside(t);
  }

 private:
  std::vector<std::string> names_;
};

}  // namespace deid
