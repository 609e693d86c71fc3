#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "deid/common.hpp"
#include "deid/rng.hpp"

namespace deid {

/// The 12 PHI types, in report order. Doctor, Hospital, State and Country
/// are detected and reported but fall outside the HIPAA-required set.
enum class PhiType : uint8_t {
  Zip,
  Date,
  Phone,
  Patient,
  ID,
  Doctor,
  Location,
  Age,
  Hospital,
  State,
  Street,
  Country,
};

inline constexpr size_t kNumPhiTypes = 12;

inline constexpr std::array<const char*, kNumPhiTypes> kPhiTypeNames = {
    "Zip",      "Date",  "Phone",  "Patient", "ID",     "Doctor",
    "Location", "Age",   "Hospital", "State", "Street", "Country"};

inline const char* phi_type_name(PhiType t) {
  return kPhiTypeNames[static_cast<size_t>(t)];
}

inline bool hipaa_required(PhiType t) {
  switch (t) {
    case PhiType::Doctor:
    case PhiType::Hospital:
    case PhiType::State:
    case PhiType::Country:
      return false;
    default:
      return true;
  }
}

inline std::optional<PhiType> parse_phi_type(std::string_view name) {
  for (size_t i = 0; i < kNumPhiTypes; ++i)
    if (name == kPhiTypeNames[i]) return static_cast<PhiType>(i);
  return std::nullopt;
}

/// Gold PHI span in standoff form: [start, end) byte offsets into the
/// owning document's UTF-8 text, with the covered text recorded redundantly.
struct Annotation {
  PhiType phi_type;
  size_t start = 0;
  size_t end = 0;
  std::string surface;
};

struct EhrMetadata {
  std::string patient_first_name;
  std::string patient_last_name;
  std::set<std::string> doctor_first_names;
  std::set<std::string> doctor_last_names;
};

struct Document {
  std::string doc_id;
  std::string text;
  std::vector<Annotation> annotations;  // sorted by start, non-overlapping
  EhrMetadata metadata;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

inline void validate_annotations(const Document& doc) {
  const auto& anns = doc.annotations;
  for (size_t i = 0; i < anns.size(); ++i) {
    const Annotation& a = anns[i];
    require(a.start < a.end && a.end <= doc.text.size(),
            "annotation offsets out of range in " + doc.doc_id + ": [" +
                std::to_string(a.start) + ", " + std::to_string(a.end) + ")");
    require(doc.text.compare(a.start, a.end - a.start, a.surface) == 0,
            "annotation surface mismatch in " + doc.doc_id + " at offset " +
                std::to_string(a.start) + ": expected \"" + a.surface + "\", text has \"" +
                doc.text.substr(a.start, a.end - a.start) + "\"");
    if (i > 0)
      require(anns[i - 1].end <= a.start,
              "overlapping annotations in " + doc.doc_id + " at offsets " +
                  std::to_string(anns[i - 1].start) + " and " + std::to_string(a.start));
  }
}

inline std::vector<Annotation> parse_annotation_file(const fs::path& path,
                                                     const std::string& doc_id) {
  std::vector<Annotation> anns;
  size_t line_no = 0;
  for (const std::string& line : read_lines(path)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    require(fields.size() == 4, doc_id + ".ann:" + std::to_string(line_no) +
                                    ": expected PHI_TYPE<TAB>start<TAB>end<TAB>surface");
    auto type = parse_phi_type(fields[0]);
    require(type.has_value(), doc_id + ".ann:" + std::to_string(line_no) +
                                  ": unknown phi_type \"" + fields[0] + "\"");
    Annotation a;
    a.phi_type = *type;
    try {
      a.start = std::stoull(fields[1]);
      a.end = std::stoull(fields[2]);
    } catch (const std::exception&) {
      throw Error(doc_id + ".ann:" + std::to_string(line_no) + ": bad offsets");
    }
    a.surface = fields[3];
    anns.push_back(std::move(a));
  }
  std::sort(anns.begin(), anns.end(),
            [](const Annotation& a, const Annotation& b) { return a.start < b.start; });
  return anns;
}

inline EhrMetadata parse_metadata_json(const std::string& content, const std::string& doc_id) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(content);
  } catch (const std::exception& e) {
    throw Error(doc_id + ".meta.json: parse error: " + e.what());
  }
  EhrMetadata m;
  try {
    m.patient_first_name = j.at("patient_first_name").get<std::string>();
    m.patient_last_name = j.at("patient_last_name").get<std::string>();
    for (const auto& n : j.at("doctor_first_names")) m.doctor_first_names.insert(n.get<std::string>());
    for (const auto& n : j.at("doctor_last_names")) m.doctor_last_names.insert(n.get<std::string>());
  } catch (const std::exception& e) {
    throw Error(doc_id + ".meta.json: missing or malformed key: " + e.what());
  }
  require(!m.patient_first_name.empty() && !m.patient_last_name.empty(),
          doc_id + ".meta.json: patient names must be nonempty");
  return m;
}

/// Loads `<doc_id>.txt` + `<doc_id>.ann` + `<doc_id>.meta.json` triples from a
/// directory. Documents come back sorted by doc_id; every annotation is
/// validated against the text.
inline std::vector<Document> load_corpus(const fs::path& notes_dir) {
  require(fs::is_directory(notes_dir), "corpus directory not found: " + notes_dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(notes_dir)) {
    if (entry.path().extension() == ".txt")
      ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  std::vector<Document> docs;
  docs.reserve(ids.size());
  for (const std::string& id : ids) {
    Document doc;
    doc.doc_id = id;
    doc.text = read_file(notes_dir / (id + ".txt"));
    fs::path ann_path = notes_dir / (id + ".ann");
    fs::path meta_path = notes_dir / (id + ".meta.json");
    require(fs::exists(ann_path), "missing annotation sidecar for " + id);
    require(fs::exists(meta_path), "missing metadata sidecar for " + id);
    doc.annotations = parse_annotation_file(ann_path, id);
    doc.metadata = parse_metadata_json(read_file(meta_path), id);
    validate_annotations(doc);
    docs.push_back(std::move(doc));
  }
  return docs;
}

inline std::string render_annotations(const Document& doc) {
  std::string out;
  for (const Annotation& a : doc.annotations) {
    out += phi_type_name(a.phi_type);
    out += '\t';
    out += std::to_string(a.start);
    out += '\t';
    out += std::to_string(a.end);
    out += '\t';
    out += a.surface;
    out += '\n';
  }
  return out;
}

inline std::string render_metadata(const EhrMetadata& m) {
  nlohmann::json j;
  j["patient_first_name"] = m.patient_first_name;
  j["patient_last_name"] = m.patient_last_name;
  j["doctor_first_names"] = m.doctor_first_names;
  j["doctor_last_names"] = m.doctor_last_names;
  return j.dump(2) + "\n";
}

/// Inverse of load_corpus, writing the canonical byte form of each sidecar.
inline void write_corpus(const fs::path& out_dir, const std::vector<Document>& docs) {
  fs::create_directories(out_dir);
  for (const Document& doc : docs) {
    write_file(out_dir / (doc.doc_id + ".txt"), doc.text);
    write_file(out_dir / (doc.doc_id + ".ann"), render_annotations(doc));
    write_file(out_dir / (doc.doc_id + ".meta.json"), render_metadata(doc.metadata));
  }
}

/// Document-level split. Each part receives floor(n * fraction) documents of
/// a seeded shuffle; leftover documents go to train, so validation and test
/// never exceed their nominal fractions.
inline DatasetSplit split_corpus(const std::vector<Document>& corpus,
                                 const std::array<double, 3>& fractions, uint64_t seed) {
  require(!corpus.empty(), "split_corpus: empty corpus");
  double sum = 0;
  for (double f : fractions) {
    require(f >= 0.0 && f <= 1.0, "split_corpus: fraction out of [0, 1]");
    sum += f;
  }
  require(std::abs(sum - 1.0) <= 1e-9, "split_corpus: fractions must sum to 1");

  size_t n = corpus.size();
  std::vector<std::string> ids(n);
  for (size_t i = 0; i < n; ++i) ids[i] = corpus[i].doc_id;
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(ids);

  size_t n_train = static_cast<size_t>(std::floor(static_cast<double>(n) * fractions[0]));
  size_t n_val = static_cast<size_t>(std::floor(static_cast<double>(n) * fractions[1]));
  size_t n_test = static_cast<size_t>(std::floor(static_cast<double>(n) * fractions[2]));
  n_train += n - (n_train + n_val + n_test);

  DatasetSplit s;
  s.train.assign(ids.begin(), ids.begin() + n_train);
  s.validation.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  s.test.assign(ids.begin() + n_train + n_val, ids.end());
  return s;
}

inline std::string render_split(const DatasetSplit& s) {
  nlohmann::json j;
  j["train"] = s.train;
  j["validation"] = s.validation;
  j["test"] = s.test;
  return j.dump(2) + "\n";
}

inline DatasetSplit parse_split(const std::string& content) {
  nlohmann::json j = nlohmann::json::parse(content);
  DatasetSplit s;
  s.train = j.at("train").get<std::vector<std::string>>();
  s.validation = j.at("validation").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  return s;
}

/// Resolve a split's id lists back to documents, preserving split order.
inline std::vector<const Document*> select_documents(const std::vector<Document>& corpus,
                                                     const std::vector<std::string>& ids) {
  std::map<std::string, const Document*> by_id;
  for (const Document& d : corpus) by_id[d.doc_id] = &d;
  std::vector<const Document*> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    auto it = by_id.find(id);
    require(it != by_id.end(), "split references unknown doc_id: " + id);
    out.push_back(it->second);
  }
  return out;
}

}  // namespace deid
