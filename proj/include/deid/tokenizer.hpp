#pragma once

#include <span>
#include <string>
#include <vector>

#include "deid/labels.hpp"

namespace deid {

/// A token with its [start, end) byte span in the original text.
struct Token {
  std::string surface;
  size_t start = 0;
  size_t end = 0;
  size_t sequence_index = 0;
};

struct Sequence {
  std::vector<Token> tokens;
  std::string doc_id;
};

enum class CharClass : uint8_t { Space, Letter, Digit, Symbol };

inline CharClass char_class(unsigned char c) {
  if (is_ascii_space(c)) return CharClass::Space;
  if (is_ascii_alpha(c) || c >= 0x80) return CharClass::Letter;  // keep UTF-8 bytes glued
  if (is_ascii_digit(c)) return CharClass::Digit;
  return CharClass::Symbol;
}

/// Whitespace split, then splits at every letter/digit/symbol class
/// transition; each symbol character becomes its own token. Offsets always
/// index the original text, so concatenating surfaces with the original
/// inter-token gaps reconstructs the input exactly.
inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  size_t i = 0;
  while (i < text.size()) {
    CharClass cls = char_class(static_cast<unsigned char>(text[i]));
    if (cls == CharClass::Space) {
      ++i;
      continue;
    }
    size_t j = i + 1;
    if (cls != CharClass::Symbol) {
      while (j < text.size() && char_class(static_cast<unsigned char>(text[j])) == cls) ++j;
    }
    tokens.push_back({std::string(text.substr(i, j - i)), i, j, 0});
    i = j;
  }
  return tokens;
}

inline bool gap_has_blank_line(std::string_view text, size_t from, size_t to) {
  int newlines = 0;
  for (size_t i = from; i < to; ++i) {
    if (text[i] == '\n') {
      if (++newlines >= 2) return true;
    } else if (text[i] != ' ' && text[i] != '\t' && text[i] != '\r') {
      newlines = 0;
    }
  }
  return false;
}

/// Splits a token stream into tagging sequences. A sequence ends after a
/// sentence terminator (. ? !) that is followed by whitespace and an
/// uppercase letter, or at a blank line; any sequence reaching max_len is
/// hard-split.
inline std::vector<Sequence> segment(std::span<const Token> tokens, std::string_view text,
                                     size_t max_len, const std::string& doc_id = "") {
  require(max_len >= 1, "segment: max_len must be >= 1");
  std::vector<Sequence> seqs;
  Sequence cur;
  cur.doc_id = doc_id;
  auto flush = [&]() {
    if (!cur.tokens.empty()) {
      seqs.push_back(std::move(cur));
      cur = Sequence{};
      cur.doc_id = doc_id;
    }
  };
  for (size_t i = 0; i < tokens.size(); ++i) {
    Token t = tokens[i];
    t.sequence_index = cur.tokens.size();
    cur.tokens.push_back(std::move(t));
    bool boundary = false;
    if (i + 1 < tokens.size()) {
      const Token& here = tokens[i];
      const Token& next = tokens[i + 1];
      bool terminator = here.surface == "." || here.surface == "?" || here.surface == "!";
      bool gap_space = next.start > here.end;
      bool next_upper =
          !next.surface.empty() && is_ascii_upper(static_cast<unsigned char>(next.surface[0]));
      if (terminator && gap_space && next_upper) boundary = true;
      if (gap_has_blank_line(text, here.end, next.start)) boundary = true;
    }
    if (boundary || cur.tokens.size() >= max_len) flush();
  }
  flush();
  return seqs;
}

/// Projects standoff annotations onto a sequence's tokens: any token
/// overlapping an annotation by at least one character takes that
/// annotation's type, B- on the first overlapping token, I- afterwards.
inline std::vector<TokenLabel> project_labels(const Sequence& seq,
                                              std::span<const Annotation> annotations) {
  std::vector<TokenLabel> labels(seq.tokens.size(), TokenLabel::outside());
  for (size_t i = 0; i < seq.tokens.size(); ++i) {
    const Token& tok = seq.tokens[i];
    const Annotation* hit = nullptr;
    for (const Annotation& a : annotations) {
      if (a.start < tok.end && tok.start < a.end) {
        require(hit == nullptr, "token \"" + tok.surface + "\" at offset " +
                                    std::to_string(tok.start) +
                                    " overlaps two annotations");
        hit = &a;
      }
    }
    if (!hit) continue;
    bool continues = i > 0 && labels[i - 1].is_phi() &&
                     seq.tokens[i - 1].start < hit->end && hit->start < seq.tokens[i - 1].end;
    labels[i] = continues ? TokenLabel::inside(hit->phi_type) : TokenLabel::begin(hit->phi_type);
  }
  return labels;
}

/// Merges contiguous B/I runs of one type back into character spans
/// (first token start through last token end).
inline std::vector<Annotation> labels_to_spans(const Sequence& seq,
                                               std::span<const TokenLabel> labels,
                                               std::string_view text) {
  require(labels.size() == seq.tokens.size(), "labels_to_spans: length mismatch");
  std::vector<Annotation> spans;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].is_phi()) continue;
    bool starts_run = labels[i].bio == Bio::B || i == 0 || !labels[i - 1].is_phi() ||
                      labels[i - 1].type != labels[i].type;
    if (!starts_run) continue;
    size_t j = i;
    while (j + 1 < labels.size() && labels[j + 1].bio == Bio::I &&
           labels[j + 1].type == labels[i].type)
      ++j;
    Annotation a;
    a.phi_type = labels[i].type;
    a.start = seq.tokens[i].start;
    a.end = seq.tokens[j].end;
    a.surface = std::string(text.substr(a.start, a.end - a.start));
    spans.push_back(std::move(a));
  }
  return spans;
}

/// CoNLL-style debug rendering: surface<TAB>start<TAB>end<TAB>label per
/// token, blank line between sequences.
inline std::string render_conll(std::span<const Sequence> seqs,
                                std::span<const std::vector<TokenLabel>> labels) {
  require(seqs.size() == labels.size(), "render_conll: sequence count mismatch");
  std::string out;
  for (size_t s = 0; s < seqs.size(); ++s) {
    require(labels[s].size() == seqs[s].tokens.size(), "render_conll: label count mismatch");
    for (size_t i = 0; i < seqs[s].tokens.size(); ++i) {
      const Token& t = seqs[s].tokens[i];
      out += t.surface + "\t" + std::to_string(t.start) + "\t" + std::to_string(t.end) +
             "\t" + labels[s][i].to_string() + "\n";
    }
    out += "\n";
  }
  return out;
}

}  // namespace deid
