#pragma once

#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "deid/labels.hpp"
#include "deid/tokenizer.hpp"

namespace deid {

/// Evaluation scope: one PHI type, PHI-vs-non-PHI over all types, or
/// PHI-vs-non-PHI restricted to the HIPAA-required types.
struct Scope {
  enum class Kind { Type, BinaryHipaa, BinaryAll };
  Kind kind = Kind::BinaryAll;
  PhiType type = PhiType::Zip;

  static Scope binary_hipaa() { return {Kind::BinaryHipaa, PhiType::Zip}; }
  static Scope binary_all() { return {Kind::BinaryAll, PhiType::Zip}; }
  static Scope of(PhiType t) { return {Kind::Type, t}; }

  std::string name() const {
    switch (kind) {
      case Kind::BinaryHipaa: return "binary-hipaa";
      case Kind::BinaryAll: return "binary-all";
      case Kind::Type: return phi_type_name(type);
    }
    return "?";
  }
};

struct ConfusionCounts {
  uint64_t tp = 0, fp = 0, fn = 0;
  uint64_t support() const { return tp + fn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

/// Token-based counting. In the binary scopes a type confusion still counts
/// as a detected PHI token; in the HIPAA scope, gold tokens of non-required
/// types are negatives, and a prediction only counts as positive if it is a
/// required type or sits on required-type gold.
inline ConfusionCounts token_confusion(std::span<const TokenLabel> gold,
                                       std::span<const TokenLabel> pred, const Scope& scope) {
  require(gold.size() == pred.size(), "token_confusion: gold/pred length mismatch");
  ConfusionCounts c;
  for (size_t i = 0; i < gold.size(); ++i) {
    bool gold_pos = false, pred_pos = false;
    switch (scope.kind) {
      case Scope::Kind::BinaryAll:
        gold_pos = gold[i].is_phi();
        pred_pos = pred[i].is_phi();
        break;
      case Scope::Kind::BinaryHipaa:
        gold_pos = gold[i].is_phi() && hipaa_required(gold[i].type);
        pred_pos = pred[i].is_phi() && (hipaa_required(pred[i].type) || gold_pos);
        break;
      case Scope::Kind::Type:
        gold_pos = gold[i].is_phi() && gold[i].type == scope.type;
        pred_pos = pred[i].is_phi() && pred[i].type == scope.type;
        break;
    }
    if (gold_pos && pred_pos) ++c.tp;
    else if (!gold_pos && pred_pos) ++c.fp;
    else if (gold_pos && !pred_pos) ++c.fn;
  }
  return c;
}

struct Metrics {
  double precision = 0, recall = 0, f1 = 0;  // percentages
};

/// P = 100*tp/(tp+fp), R = 100*tp/(tp+fn). An empty denominator yields 100
/// when the scope is entirely empty (nothing to find, nothing found) and 0
/// otherwise; F1 is the harmonic mean, 0 when P+R = 0.
inline Metrics metrics(const ConfusionCounts& c) {
  Metrics m;
  bool no_pred = c.tp + c.fp == 0;
  bool no_gold = c.tp + c.fn == 0;
  m.precision = no_pred ? (no_gold ? 100.0 : 0.0)
                        : 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  m.recall = no_gold ? (no_pred ? 100.0 : 0.0)
                     : 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  m.f1 = (m.precision + m.recall > 0)
             ? 2 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

struct MetricReport {
  struct Row {
    std::string scope;
    double precision = 0, recall = 0, f1 = 0;
    uint64_t support = 0;
  };
  std::vector<Row> rows;
  size_t n_runs = 1;

  const Row& row(std::string_view scope) const {
    for (const Row& r : rows)
      if (r.scope == scope) return r;
    throw Error("metric report has no scope \"" + std::string(scope) + "\"");
  }

  const Row& binary_hipaa() const { return row("binary-hipaa"); }
  const Row& binary_all() const { return row("binary-all"); }
};

inline std::vector<Scope> report_scopes() {
  std::vector<Scope> scopes;
  for (size_t i = 0; i < kNumPhiTypes; ++i) scopes.push_back(Scope::of(static_cast<PhiType>(i)));
  scopes.push_back(Scope::binary_hipaa());
  scopes.push_back(Scope::binary_all());
  return scopes;
}

/// Builds the full per-type + binary report from aligned label sequences.
inline MetricReport report_from_labels(
    std::span<const std::vector<TokenLabel>> gold,
    std::span<const std::vector<TokenLabel>> pred) {
  require(gold.size() == pred.size(), "report_from_labels: sequence count mismatch");
  MetricReport report;
  for (const Scope& scope : report_scopes()) {
    ConfusionCounts total;
    for (size_t s = 0; s < gold.size(); ++s)
      total += token_confusion(gold[s], pred[s], scope);
    Metrics m = metrics(total);
    report.rows.push_back({scope.name(), m.precision, m.recall, m.f1, total.support()});
  }
  return report;
}

/// Document-level evaluation: tokenizes each gold document once and projects
/// both gold and predicted spans onto the same tokens. Every gold document
/// must have a prediction entry.
inline MetricReport full_report(std::span<const Document> gold_docs,
                                const std::map<std::string, std::vector<Annotation>>& predictions,
                                size_t max_sequence_length = 250) {
  std::vector<std::vector<TokenLabel>> gold_labels, pred_labels;
  for (const Document& doc : gold_docs) {
    auto it = predictions.find(doc.doc_id);
    require(it != predictions.end(), "no predictions for document " + doc.doc_id);
    for (const Annotation& a : it->second) {
      require(a.end <= doc.text.size(),
              "prediction span out of range in " + doc.doc_id + " (token misalignment?)");
      require(doc.text.compare(a.start, a.end - a.start, a.surface) == 0,
              "prediction surface mismatch in " + doc.doc_id + " (token misalignment?)");
    }
    auto tokens = tokenize(doc.text);
    for (const Sequence& seq : segment(tokens, doc.text, max_sequence_length, doc.doc_id)) {
      gold_labels.push_back(project_labels(seq, doc.annotations));
      pred_labels.push_back(project_labels(seq, it->second));
    }
  }
  return report_from_labels(gold_labels, pred_labels);
}

/// Arithmetic mean of every P/R/F1 cell across runs; scopes and supports
/// must agree.
inline MetricReport aggregate(std::span<const MetricReport> reports) {
  require(!reports.empty(), "aggregate: no reports");
  MetricReport out = reports[0];
  out.n_runs = 0;
  for (const MetricReport& r : reports) {
    require(r.rows.size() == out.rows.size(), "aggregate: scope count mismatch");
    for (size_t i = 0; i < r.rows.size(); ++i) {
      require(r.rows[i].scope == out.rows[i].scope, "aggregate: scope name mismatch");
      require(r.rows[i].support == out.rows[i].support, "aggregate: support mismatch in scope " +
                                                            r.rows[i].scope);
    }
    out.n_runs += r.n_runs;
  }
  for (size_t i = 0; i < out.rows.size(); ++i) {
    double p = 0, rec = 0, f = 0;
    for (const MetricReport& r : reports) {
      p += r.rows[i].precision;
      rec += r.rows[i].recall;
      f += r.rows[i].f1;
    }
    out.rows[i].precision = p / static_cast<double>(reports.size());
    out.rows[i].recall = rec / static_cast<double>(reports.size());
    out.rows[i].f1 = f / static_cast<double>(reports.size());
  }
  return out;
}

inline std::string format_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

/// TSV rendering: scope, precision, recall, F1 (three decimals), support.
inline std::string render_report_tsv(const MetricReport& report) {
  std::string out = "scope\tprecision\trecall\tf1\tsupport\n";
  for (const auto& r : report.rows)
    out += r.scope + "\t" + format_pct(r.precision) + "\t" + format_pct(r.recall) + "\t" +
           format_pct(r.f1) + "\t" + std::to_string(r.support) + "\n";
  return out;
}

inline void to_json(nlohmann::json& j, const MetricReport& report) {
  j = nlohmann::json::object();
  j["n_runs"] = report.n_runs;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"scope", r.scope},
                    {"precision", r.precision},
                    {"recall", r.recall},
                    {"f1", r.f1},
                    {"support", r.support}});
  j["scopes"] = rows;
}

inline void from_json(const nlohmann::json& j, MetricReport& report) {
  report.rows.clear();
  report.n_runs = j.value("n_runs", size_t{1});
  for (const auto& r : j.at("scopes"))
    report.rows.push_back({r.at("scope").get<std::string>(), r.at("precision").get<double>(),
                           r.at("recall").get<double>(), r.at("f1").get<double>(),
                           r.at("support").get<uint64_t>()});
}

}  // namespace deid
