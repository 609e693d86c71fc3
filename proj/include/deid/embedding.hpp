#pragma once

#include <array>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "deid/features.hpp"
#include "deid/neural.hpp"

namespace deid {

/// All hyperparameters. Dimension defaults: character embeddings 25,
/// character bi-LSTM 25 per direction, token embeddings 100, label bi-LSTM
/// 100 per direction, feature projection 25.
struct Config {
  size_t d_char = 25;
  size_t d_char_lstm = 25;
  size_t d_token = 100;
  size_t d_label_lstm = 100;
  size_t d_feat = 25;
  size_t feat_layers = 1;  // affine+tanh layers in the feature network
  double dropout_p = 0.5;
  double learning_rate = 0.005;
  double clip_norm = 5.0;
  size_t max_epochs = 100;
  size_t patience = 10;
  size_t max_sequence_length = 250;
  uint64_t seed = 0;

  void validate() const {
    require(d_char >= 1 && d_char_lstm >= 1 && d_token >= 1 && d_label_lstm >= 1 && d_feat >= 1,
            "config: all dimensions must be >= 1");
    require(feat_layers >= 1, "config: feat_layers must be >= 1");
    require(dropout_p >= 0.0 && dropout_p < 1.0, "config: dropout_p must be in [0, 1)");
    require(learning_rate > 0.0, "config: learning_rate must be positive");
    require(max_sequence_length >= 1, "config: max_sequence_length must be >= 1");
  }

  /// Token-embedding width: feature block (when a schema is present) +
  /// pre-trained token block + character bi-LSTM block.
  size_t embedding_dim(bool has_features) const {
    return (has_features ? d_feat : 0) + d_token + 2 * d_char_lstm;
  }
};

inline void to_json(nlohmann::json& j, const Config& c) {
  j = nlohmann::json{{"d_char", c.d_char},
                     {"d_char_lstm", c.d_char_lstm},
                     {"d_token", c.d_token},
                     {"d_label_lstm", c.d_label_lstm},
                     {"d_feat", c.d_feat},
                     {"feat_layers", c.feat_layers},
                     {"dropout_p", c.dropout_p},
                     {"learning_rate", c.learning_rate},
                     {"clip_norm", c.clip_norm},
                     {"max_epochs", c.max_epochs},
                     {"patience", c.patience},
                     {"max_sequence_length", c.max_sequence_length},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, Config& c) {
  Config d;
  c.d_char = j.value("d_char", d.d_char);
  c.d_char_lstm = j.value("d_char_lstm", d.d_char_lstm);
  c.d_token = j.value("d_token", d.d_token);
  c.d_label_lstm = j.value("d_label_lstm", d.d_label_lstm);
  c.d_feat = j.value("d_feat", d.d_feat);
  c.feat_layers = j.value("feat_layers", d.feat_layers);
  c.dropout_p = j.value("dropout_p", d.dropout_p);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.patience = j.value("patience", d.patience);
  c.max_sequence_length = j.value("max_sequence_length", d.max_sequence_length);
  c.seed = j.value("seed", d.seed);
}

/// Byte-level character vocabulary; index 0 is UNK.
class CharVocab {
 public:
  CharVocab() { index_.fill(-1); }

  static CharVocab from_strings(std::span<const std::string> surfaces) {
    std::set<unsigned char> seen;
    for (const std::string& s : surfaces)
      for (unsigned char c : s) seen.insert(c);
    CharVocab v;
    for (unsigned char c : seen) v.add(c);
    return v;
  }

  void add(unsigned char c) {
    if (index_[c] < 0) {
      index_[c] = static_cast<int>(chars_.size()) + 1;
      chars_.push_back(c);
    }
  }

  size_t rows() const { return chars_.size() + 1; }
  int id(unsigned char c) const { return index_[c] < 0 ? 0 : index_[c]; }
  const std::vector<unsigned char>& chars() const { return chars_; }

 private:
  std::vector<unsigned char> chars_;
  std::array<int, 256> index_;
};

/// Case-folded token vocabulary; index 0 is UNK. Tokens are stored sorted so
/// the id assignment is deterministic.
class TokenVocab {
 public:
  TokenVocab() = default;

  static TokenVocab from_tokens(const std::set<std::string>& casefolded) {
    TokenVocab v;
    v.tokens_.assign(casefolded.begin(), casefolded.end());
    for (size_t i = 0; i < v.tokens_.size(); ++i)
      v.index_[v.tokens_[i]] = static_cast<int>(i) + 1;
    return v;
  }

  size_t rows() const { return tokens_.size() + 1; }

  /// Case-folded exact lookup, UNK (0) otherwise.
  int id(std::string_view surface) const {
    auto it = index_.find(casefold(surface));
    return it == index_.end() ? 0 : it->second;
  }

  bool contains(std::string_view casefolded) const {
    return index_.count(std::string(casefolded)) > 0;
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

inline constexpr double kEmbeddingInitRange = 0.25;

inline Param make_char_table(const CharVocab& vocab, size_t d_char, Rng& rng) {
  Param p("char_table", {vocab.rows(), d_char}, /*sparse=*/true);
  init_uniform(p, rng, kEmbeddingInitRange);
  return p;
}

inline Param make_token_table(const TokenVocab& vocab, size_t d_token, Rng& rng) {
  Param p("token_table", {vocab.rows(), d_token}, /*sparse=*/true);
  init_uniform(p, rng, kEmbeddingInitRange);
  return p;
}

/// Loads word vectors in text format (token then d floats per line). Rows
/// for in-vocabulary tokens are copied; out-of-vocabulary rows and UNK keep
/// their seeded uniform +-0.25 initialization. When one vocabulary entry
/// appears on several lines the first line wins.
inline Param load_pretrained(const fs::path& path, const TokenVocab& vocab, size_t d_token,
                             Rng& rng) {
  Param table = make_token_table(vocab, d_token, rng);
  std::ifstream in(path);
  require(in.good(), "cannot open pre-trained embeddings: " + path.string());
  std::string line;
  size_t line_no = 0;
  std::set<int> filled;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    size_t sp = line.find(' ');
    require(sp != std::string::npos && sp > 0,
            "pre-trained embeddings " + path.string() + ":" + std::to_string(line_no) +
                ": malformed line");
    std::string word = casefold(std::string_view(line).substr(0, sp));
    if (!vocab.contains(word)) continue;  // token absent from vocabulary
    int row = vocab.id(word);
    if (filled.count(row)) continue;
    std::vector<double> values;
    values.reserve(d_token);
    const char* p = line.c_str() + sp;
    char* end = nullptr;
    while (*p) {
      double v = std::strtod(p, &end);
      if (end == p) break;
      values.push_back(v);
      p = end;
    }
    require(*p == '\0' || is_ascii_space(static_cast<unsigned char>(*p)),
            "pre-trained embeddings " + path.string() + ":" + std::to_string(line_no) +
                ": malformed float");
    require(values.size() == d_token,
            "pre-trained embeddings " + path.string() + ":" + std::to_string(line_no) +
                ": dimension " + std::to_string(values.size()) + " does not match configured " +
                std::to_string(d_token));
    std::copy(values.begin(), values.end(), table.value.row(static_cast<size_t>(row)));
    filled.insert(row);
  }
  return table;
}

/// Feature projection: feat_layers x (affine + tanh). The first layer maps
/// |schema| -> d_feat, any extra layers are d_feat -> d_feat. Bypassed
/// entirely for a zero-length schema.
struct FeatureProjection {
  std::vector<Param> weights;
  std::vector<Param> biases;

  FeatureProjection() = default;
  FeatureProjection(size_t schema_size, const Config& cfg, Rng& rng) {
    if (schema_size == 0) return;
    for (size_t l = 0; l < cfg.feat_layers; ++l) {
      size_t in = l == 0 ? schema_size : cfg.d_feat;
      weights.emplace_back("feat_proj.w" + std::to_string(l),
                           std::vector<size_t>{cfg.d_feat, in});
      biases.emplace_back("feat_proj.b" + std::to_string(l), std::vector<size_t>{cfg.d_feat});
      init_glorot(weights.back(), rng, in, cfg.d_feat);
    }
  }

  bool active() const { return !weights.empty(); }

  NodeId apply(Tape& tape, NodeId x) const {
    NodeId h = x;
    for (size_t l = 0; l < weights.size(); ++l)
      h = feedforward(tape, weights[l], biases[l], h);
    return h;
  }
};

/// Runs the character bi-LSTM over a token's bytes and returns the
/// concatenation of the final forward and final backward states.
inline NodeId char_encode(Tape& tape, const std::string& surface, const CharVocab& vocab,
                          const Param& char_table, const LstmParams& fwd,
                          const LstmParams& bwd) {
  require(!surface.empty(), "char_encode: empty token surface");
  std::vector<NodeId> xs;
  xs.reserve(surface.size());
  for (unsigned char c : surface)
    xs.push_back(tape.row(char_table, static_cast<size_t>(vocab.id(c))));
  LstmState f = lstm_initial(tape, fwd);
  for (NodeId x : xs) f = lstm_step(tape, fwd, x, f);
  LstmState b = lstm_initial(tape, bwd);
  for (size_t i = xs.size(); i-- > 0;) b = lstm_step(tape, bwd, xs[i], b);
  NodeId parts[2] = {f.h, b.h};
  return tape.concat(parts);
}

}  // namespace deid
