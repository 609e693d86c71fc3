#pragma once

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <optional>
#include <unordered_map>

#include "deid/embedding.hpp"
#include "deid/labels.hpp"

namespace deid {

struct TagSequence {
  std::vector<TokenLabel> labels;
  double score = 0;
};

/// Any I-X not preceded by a B-X or I-X of the same type becomes B-X;
/// nothing else changes. Idempotent.
inline TagSequence repair_bio(TagSequence tags) {
  for (size_t i = 0; i < tags.labels.size(); ++i) {
    TokenLabel& l = tags.labels[i];
    if (l.bio != Bio::I) continue;
    bool ok = i > 0 && tags.labels[i - 1].is_phi() && tags.labels[i - 1].type == l.type;
    if (!ok) l.bio = Bio::B;
  }
  return tags;
}

/// The complete tagger: character-enhanced, feature-augmented token
/// embeddings feeding a bi-LSTM label predictor and a linear-chain CRF.
struct DeidModel {
  Config cfg;
  LabelSet label_set;
  FeatureSchema schema;
  CharVocab char_vocab;
  TokenVocab token_vocab;

  Param char_table;
  LstmParams char_fwd, char_bwd;
  Param token_table;
  FeatureProjection feat_proj;
  LstmParams label_fwd, label_bwd;
  Param emit_w, emit_b;
  Param trans;

  static DeidModel init(const Config& cfg, FeatureSchema schema, CharVocab cv, TokenVocab tv,
                        const std::optional<fs::path>& pretrained = std::nullopt) {
    cfg.validate();
    DeidModel m;
    m.cfg = cfg;
    m.schema = std::move(schema);
    m.char_vocab = std::move(cv);
    m.token_vocab = std::move(tv);
    Rng rng(cfg.seed);
    m.char_table = make_char_table(m.char_vocab, cfg.d_char, rng);
    m.char_fwd = LstmParams("char_fwd", cfg.d_char, cfg.d_char_lstm, rng);
    m.char_bwd = LstmParams("char_bwd", cfg.d_char, cfg.d_char_lstm, rng);
    m.token_table = pretrained
                        ? load_pretrained(*pretrained, m.token_vocab, cfg.d_token, rng)
                        : make_token_table(m.token_vocab, cfg.d_token, rng);
    m.feat_proj = FeatureProjection(m.schema.size(), cfg, rng);
    size_t emb = cfg.embedding_dim(m.schema.size() > 0);
    m.label_fwd = LstmParams("label_fwd", emb, cfg.d_label_lstm, rng);
    m.label_bwd = LstmParams("label_bwd", emb, cfg.d_label_lstm, rng);
    size_t L = m.label_set.size();
    m.emit_w = Param("emit.w", {L, 2 * cfg.d_label_lstm});
    init_glorot(m.emit_w, rng, 2 * cfg.d_label_lstm, L);
    m.emit_b = Param("emit.b", {L});
    m.trans = Param("trans", {L + 2, L + 2});
    return m;
  }

  std::vector<Param*> params() {
    std::vector<Param*> ps{&char_table};
    for (Param* p : char_fwd.params()) ps.push_back(p);
    for (Param* p : char_bwd.params()) ps.push_back(p);
    ps.push_back(&token_table);
    for (size_t l = 0; l < feat_proj.weights.size(); ++l) {
      ps.push_back(&feat_proj.weights[l]);
      ps.push_back(&feat_proj.biases[l]);
    }
    for (Param* p : label_fwd.params()) ps.push_back(p);
    for (Param* p : label_bwd.params()) ps.push_back(p);
    ps.push_back(&emit_w);
    ps.push_back(&emit_b);
    ps.push_back(&trans);
    return ps;
  }

  std::vector<const Param*> params() const {
    auto ps = const_cast<DeidModel*>(this)->params();
    return {ps.begin(), ps.end()};
  }

  size_t embedding_dim() const { return cfg.embedding_dim(schema.size() > 0); }

  /// Per-token embedding: concat(feature FFN output, token embedding,
  /// character bi-LSTM encoding), with dropout over the whole concatenated
  /// vector while training. Pass rng = nullptr for inference.
  std::vector<NodeId> embed_sequence(Tape& tape, const Sequence& seq,
                                     std::span<const FeatureVector> feats, Rng* rng,
                                     bool training) const {
    require(feats.size() == seq.tokens.size(), "embed_sequence: feature row per token required");
    bool use_feats = feat_proj.active();
    std::unordered_map<std::string, NodeId> char_memo;
    std::vector<NodeId> out;
    out.reserve(seq.tokens.size());
    std::vector<double> bits;
    for (size_t i = 0; i < seq.tokens.size(); ++i) {
      const Token& tok = seq.tokens[i];
      if (feats[i].size() != schema.size()) [[unlikely]]
        throw Error("embed_sequence: feature vector length " + std::to_string(feats[i].size()) +
                    " does not match schema size " + std::to_string(schema.size()));
      NodeId chars;
      auto it = char_memo.find(tok.surface);
      if (it != char_memo.end()) {
        chars = it->second;
      } else {
        chars = char_encode(tape, tok.surface, char_vocab, char_table, char_fwd, char_bwd);
        char_memo.emplace(tok.surface, chars);
      }
      NodeId word = tape.row(token_table, static_cast<size_t>(token_vocab.id(tok.surface)));
      NodeId emb;
      if (use_feats) {
        bits.assign(feats[i].begin(), feats[i].end());
        NodeId proj = feat_proj.apply(tape, tape.input(bits));
        NodeId parts[3] = {proj, word, chars};
        emb = tape.concat(parts);
      } else {
        NodeId parts[2] = {word, chars};
        emb = tape.concat(parts);
      }
      if (training && rng && cfg.dropout_p > 0)
        emb = tape.dropout(emb, cfg.dropout_p, *rng, true);
      out.push_back(emb);
    }
    return out;
  }

  /// Label-prediction layer: bi-LSTM over the embedded sequence, then an
  /// affine projection to one unnormalized score per label.
  std::vector<NodeId> emissions(Tape& tape, std::span<const NodeId> embedded) const {
    require(!embedded.empty(), "emissions: empty sequence");
    std::vector<NodeId> hidden = bilstm(tape, label_fwd, label_bwd, embedded);
    std::vector<NodeId> out(hidden.size());
    for (size_t t = 0; t < hidden.size(); ++t)
      out[t] = tape.affine(emit_w, hidden[t], nullptr, kNoNode, &emit_b);
    return out;
  }

  NodeId sequence_nll(Tape& tape, const Sequence& seq, std::span<const FeatureVector> feats,
                      std::span<const int> gold, Rng& rng, bool training = true) const {
    auto embedded = embed_sequence(tape, seq, feats, training ? &rng : nullptr, training);
    auto em = emissions(tape, embedded);
    return tape.crf_nll(em, trans, gold);
  }

  Tensor emission_matrix(Tape& tape, std::span<const NodeId> em_nodes) const {
    Tensor m = Tensor::zeros({em_nodes.size(), label_set.size()});
    for (size_t t = 0; t < em_nodes.size(); ++t) {
      auto v = tape.value(em_nodes[t]);
      std::copy(v.begin(), v.end(), m.row(t));
    }
    return m;
  }

  /// Full inference path: embed (dropout off), emissions, Viterbi decode,
  /// BIO repair.
  TagSequence predict_sequence(const Sequence& seq, std::span<const FeatureVector> feats) const {
    require(!seq.tokens.empty(), "predict: empty sequence");
    Tape tape;
    auto embedded = embed_sequence(tape, seq, feats, nullptr, false);
    auto em_nodes = emissions(tape, embedded);
    Tensor em = emission_matrix(tape, em_nodes);
    ViterbiResult vr = crf_viterbi(em, trans.value);
    TagSequence tags;
    tags.score = vr.score;
    tags.labels.reserve(vr.path.size());
    for (int id : vr.path) tags.labels.push_back(label_set.label(id));
    return repair_bio(std::move(tags));
  }
};

/// Guards against feature-layout drift between a loaded model and the
/// schema the caller intends to extract with.
inline void check_schema_compatible(const DeidModel& model, const FeatureSchema& schema) {
  require(schema.hash() == model.schema.hash(),
          "feature schema mismatch: model was trained with a different feature layout");
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned binary container plus a JSON manifest mirror.

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double d) {
  uint64_t bits;
  static_assert(sizeof(bits) == sizeof(d));
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}
inline void put_str(std::string& out, std::string_view s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.append(s);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  explicit Reader(const std::string& b) : buf(b) {}
  void need(size_t n) { require(pos + n <= buf.size(), "checkpoint: truncated file"); }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string str() {
    uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

inline constexpr char kCkptMagic[9] = "DEIDCKP1";

}  // namespace detail

inline void save_checkpoint(const DeidModel& model, const fs::path& path) {
  std::string out;
  out.append(detail::kCkptMagic, 8);
  detail::put_u32(out, 1);  // format version
  detail::put_u64(out, model.schema.hash());

  nlohmann::json header;
  header["config"] = model.cfg;
  header["labels"] = model.label_set.names();
  nlohmann::json schema_json = nlohmann::json::array();
  for (const auto& e : model.schema.entries)
    schema_json.push_back({{"name", e.name}, {"family", feature_family_name(e.family)}});
  header["schema"] = schema_json;
  detail::put_str(out, header.dump());

  const auto& chars = model.char_vocab.chars();
  detail::put_u32(out, static_cast<uint32_t>(chars.size()));
  for (unsigned char c : chars) out.push_back(static_cast<char>(c));

  const auto& tokens = model.token_vocab.tokens();
  detail::put_u32(out, static_cast<uint32_t>(tokens.size()));
  for (const std::string& t : tokens) detail::put_str(out, t);

  auto params = model.params();
  detail::put_u32(out, static_cast<uint32_t>(params.size()));
  for (const Param* p : params) {
    detail::put_str(out, p->name);
    detail::put_u32(out, static_cast<uint32_t>(p->value.shape.size()));
    for (size_t d : p->value.shape) detail::put_u64(out, d);
    for (double v : p->value.v) detail::put_f64(out, v);
  }
  write_file(path, out);

  nlohmann::json manifest;
  manifest["format"] = "deid-checkpoint";
  manifest["version"] = 1;
  char hash_hex[17];
  std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                static_cast<unsigned long long>(model.schema.hash()));
  manifest["schema_hash"] = hash_hex;
  manifest["config"] = model.cfg;
  manifest["labels"] = model.label_set.names();
  manifest["schema"] = schema_json;
  manifest["char_vocab_size"] = chars.size();
  manifest["token_vocab_size"] = tokens.size();
  nlohmann::json tensors = nlohmann::json::array();
  for (const Param* p : params)
    tensors.push_back({{"name", p->name}, {"shape", p->value.shape}});
  manifest["tensors"] = tensors;
  write_file(path.string() + ".json", manifest.dump(2) + "\n");
}

inline DeidModel load_checkpoint(const fs::path& path) {
  std::string buf = read_file(path);
  detail::Reader r(buf);
  r.need(8);
  require(buf.compare(0, 8, detail::kCkptMagic, 8) == 0, "checkpoint: bad magic in " + path.string());
  r.pos = 8;
  uint32_t version = r.u32();
  require(version == 1, "checkpoint: unsupported format version " + std::to_string(version));
  uint64_t stored_hash = r.u64();

  nlohmann::json header = nlohmann::json::parse(r.str());
  Config cfg = header.at("config").get<Config>();
  FeatureSchema schema;
  for (const auto& e : header.at("schema")) {
    auto fam = parse_feature_family(e.at("family").get<std::string>());
    require(fam.has_value(), "checkpoint: unknown feature family");
    schema.entries.push_back({e.at("name").get<std::string>(), *fam});
  }
  require(schema.hash() == stored_hash, "checkpoint: schema hash mismatch (corrupt file?)");
  auto labels = header.at("labels").get<std::vector<std::string>>();

  CharVocab cv;
  uint32_t n_chars = r.u32();
  for (uint32_t i = 0; i < n_chars; ++i) {
    r.need(1);
    cv.add(static_cast<unsigned char>(buf[r.pos++]));
  }
  std::set<std::string> token_set;
  uint32_t n_tokens = r.u32();
  for (uint32_t i = 0; i < n_tokens; ++i) token_set.insert(r.str());
  TokenVocab tv = TokenVocab::from_tokens(token_set);

  DeidModel m = DeidModel::init(cfg, std::move(schema), std::move(cv), std::move(tv));
  require(m.label_set.names() == labels, "checkpoint: label set mismatch");

  auto params = m.params();
  uint32_t n_tensors = r.u32();
  require(n_tensors == params.size(), "checkpoint: tensor count mismatch");
  for (Param* p : params) {
    std::string name = r.str();
    require(name == p->name, "checkpoint: expected tensor " + p->name + ", found " + name);
    uint32_t rank = r.u32();
    std::vector<size_t> shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<size_t>(r.u64());
    require(shape == p->value.shape, "checkpoint: shape mismatch for tensor " + name);
    for (double& v : p->value.v) v = r.f64();
  }
  require(r.pos == buf.size(), "checkpoint: trailing bytes in " + path.string());
  return m;
}

}  // namespace deid
