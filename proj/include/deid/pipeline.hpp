#pragma once

#include <map>

#include "deid/evaluation.hpp"
#include "deid/tagger.hpp"

namespace deid {

/// End-to-end inference for one document: tokenize, segment, extract
/// features with the model's own schema, decode, and merge token labels back
/// into standoff spans.
inline std::vector<Annotation> predict_document(const DeidModel& model, const Document& doc,
                                                const FeatureResources& resources) {
  std::vector<Annotation> spans;
  auto tokens = tokenize(doc.text);
  for (const Sequence& seq : segment(tokens, doc.text, model.cfg.max_sequence_length, doc.doc_id)) {
    auto feats = extract_all(seq, doc.metadata, model.schema, resources);
    TagSequence tags = model.predict_sequence(seq, feats);
    for (Annotation& a : labels_to_spans(seq, tags.labels, doc.text)) spans.push_back(std::move(a));
  }
  return spans;
}

inline std::map<std::string, std::vector<Annotation>> predict_corpus(
    const DeidModel& model, std::span<const Document> docs, const FeatureResources& resources) {
  std::map<std::string, std::vector<Annotation>> out;
  for (const Document& doc : docs) out[doc.doc_id] = predict_document(model, doc, resources);
  return out;
}

/// Replaces every predicted span with `[**TYPE**]`. The output never
/// contains any character of a replaced span.
inline std::string redact(const std::string& text, std::span<const Annotation> spans) {
  std::vector<const Annotation*> ordered;
  for (const Annotation& a : spans) ordered.push_back(&a);
  std::sort(ordered.begin(), ordered.end(),
            [](const Annotation* a, const Annotation* b) { return a->start < b->start; });
  std::string out;
  size_t pos = 0;
  for (const Annotation* a : ordered) {
    require(a->start >= pos && a->end <= text.size(), "redact: overlapping or out-of-range span");
    out += text.substr(pos, a->start - pos);
    out += "[**" + to_upper(phi_type_name(a->phi_type)) + "**]";
    pos = a->end;
  }
  out += text.substr(pos);
  return out;
}

}  // namespace deid
