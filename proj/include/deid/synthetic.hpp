#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deid/corpus.hpp"

namespace deid {

/// Per-type expected counts per note for the synthetic generator. The
/// defaults keep the per-type support distribution roughly shaped like a
/// real discharge-summary corpus: dates dominate, rare types stay rare but
/// present.
struct GenProfile {
  std::map<PhiType, double> per_note = {
      {PhiType::Date, 3.0},    {PhiType::Doctor, 1.2},  {PhiType::Phone, 0.7},
      {PhiType::Hospital, 0.6}, {PhiType::ID, 0.4},      {PhiType::Location, 0.5},
      {PhiType::Patient, 1.0},  {PhiType::Age, 0.15},    {PhiType::State, 0.3},
      {PhiType::Street, 0.18},  {PhiType::Zip, 0.22},    {PhiType::Country, 0.1},
  };
  size_t filler_sentences = 2;
  double name_mutation_p = 0.15;    // out-of-gazetteer surname variants
  double phone_extension_p = 0.12;  // "... ext 6599"
  double phone_corrupt_p = 0.06;    // separator-corrupted numbers
  double lowercase_mention_p = 0.18;

  static GenProfile from_json(const nlohmann::json& j) {
    GenProfile p;
    if (j.contains("per_note"))
      for (auto it = j["per_note"].begin(); it != j["per_note"].end(); ++it) {
        auto t = parse_phi_type(it.key());
        require(t.has_value(), "profile: unknown phi type " + it.key());
        p.per_note[*t] = it.value().get<double>();
      }
    p.filler_sentences = j.value("filler_sentences", p.filler_sentences);
    p.name_mutation_p = j.value("name_mutation_p", p.name_mutation_p);
    p.phone_extension_p = j.value("phone_extension_p", p.phone_extension_p);
    p.phone_corrupt_p = j.value("phone_corrupt_p", p.phone_corrupt_p);
    p.lowercase_mention_p = j.value("lowercase_mention_p", p.lowercase_mention_p);
    return p;
  }
};

namespace gen {

inline std::vector<std::string> load_pool(const fs::path& path) {
  std::vector<std::string> out;
  for (const std::string& raw : read_lines(path)) {
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (!line.empty()) out.push_back(line);
  }
  require(!out.empty(), "empty generator pool: " + path.string());
  return out;
}

inline std::string title_case(std::string s) {
  bool start = true;
  for (char& c : s) {
    c = start ? ascii_upper(c) : ascii_lower(c);
    start = !is_ascii_alpha(static_cast<unsigned char>(c));
  }
  return s;
}

/// Template bank plus the value pools placeholders draw from. Name pools are
/// shared with the feature gazetteers on purpose; street/city casing is
/// restored at render time.
struct Bank {
  std::vector<std::string> headers;          // separated by "===" lines
  std::vector<std::string> sentences;        // one template per line
  std::vector<std::string> fillers;
  std::vector<std::string> first_names, last_names, cities, states, countries,
      street_names, street_suffixes, drugs, conditions, procedures;
  std::map<PhiType, std::vector<size_t>> by_type;  // sentence indices per type

  static Bank load(const fs::path& resource_root) {
    fs::path tdir = resource_root / "templates";
    Bank b;
    b.headers = load_blocks(tdir / "headers.txt");
    b.sentences = load_pool(tdir / "sentences.txt");
    b.fillers = load_pool(tdir / "filler.txt");
    b.first_names = load_pool(resource_root / "gazetteers" / "first_names.txt");
    b.last_names = load_pool(resource_root / "gazetteers" / "last_names.txt");
    b.cities = load_pool(resource_root / "gazetteers" / "us_cities.txt");
    b.states = load_pool(tdir / "pool_states.txt");
    b.countries = load_pool(tdir / "pool_countries.txt");
    b.street_names = load_pool(tdir / "pool_street_names.txt");
    b.street_suffixes = load_pool(tdir / "pool_street_suffixes.txt");
    b.drugs = load_pool(tdir / "pool_drugs.txt");
    b.conditions = load_pool(tdir / "pool_conditions.txt");
    b.procedures = load_pool(tdir / "pool_procedures.txt");
    for (size_t i = 0; i < b.sentences.size(); ++i)
      for (PhiType t : template_types(b.sentences[i]))
        b.by_type[t].push_back(i);
    for (size_t i = 0; i < kNumPhiTypes; ++i) {
      PhiType t = static_cast<PhiType>(i);
      require(b.by_type.count(t) && !b.by_type[t].empty(),
              std::string("no sentence template covers PHI type ") + phi_type_name(t));
    }
    return b;
  }

  static std::vector<std::string> load_blocks(const fs::path& path) {
    std::vector<std::string> blocks;
    std::string cur;
    for (const std::string& line : read_lines(path)) {
      if (trim(line) == "===") {
        if (!trim(cur).empty()) blocks.push_back(cur);
        cur.clear();
      } else {
        cur += line;
        cur += '\n';
      }
    }
    if (!trim(cur).empty()) blocks.push_back(cur);
    require(!blocks.empty(), "no header blocks in " + path.string());
    return blocks;
  }

  static std::vector<PhiType> template_types(const std::string& tmpl) {
    struct KeyType {
      const char* key;
      PhiType type;
    };
    static const KeyType table[] = {
        {"PATIENT", PhiType::Patient}, {"DOCTOR", PhiType::Doctor},
        {"DATE", PhiType::Date},       {"PHONE", PhiType::Phone},
        {"ZIP", PhiType::Zip},         {"ID", PhiType::ID},
        {"HOSPITAL", PhiType::Hospital}, {"CITY", PhiType::Location},
        {"STATE", PhiType::State},     {"STREET", PhiType::Street},
        {"COUNTRY", PhiType::Country}, {"AGE90", PhiType::Age},
    };
    std::vector<PhiType> types;
    for (const KeyType& kt : table) {
      if (tmpl.find(std::string("{") + kt.key) == std::string::npos) continue;
      bool seen = false;
      for (PhiType existing : types) seen = seen || existing == kt.type;
      if (!seen) types.push_back(kt.type);
    }
    return types;
  }
};

/// One note under construction: text plus annotations with exact offsets.
struct NoteBuilder {
  std::string text;
  std::vector<Annotation> annotations;

  void plain(std::string_view s) { text += s; }

  void phi(PhiType type, std::string_view value) {
    Annotation a;
    a.phi_type = type;
    a.start = text.size();
    text += value;
    a.end = text.size();
    a.surface = std::string(value);
    annotations.push_back(std::move(a));
  }
};

struct NoteState {
  std::string patient_first, patient_last;
  std::vector<std::pair<std::string, std::string>> doctors;  // (first, last)
};

inline std::string apply_mod(std::string v, std::string_view mod) {
  if (mod == "upper") return to_upper(v);
  if (mod == "lower") return casefold(v);
  if (mod == "title") return title_case(std::move(v));
  require(mod.empty(), "unknown placeholder modifier: " + std::string(mod));
  return v;
}

class Generator {
 public:
  Generator(const Bank& bank, const GenProfile& profile, Rng& rng)
      : bank_(bank), profile_(profile), rng_(rng) {}

  Document make_note(size_t index) {
    Document doc;
    char id[32];
    std::snprintf(id, sizeof id, "note-%05zu", index);
    doc.doc_id = id;

    state_ = NoteState{};
    state_.patient_first = pick(bank_.first_names);
    state_.patient_last = maybe_mutate(pick(bank_.last_names));
    size_t n_doctors = 1 + rng_.below(2);
    for (size_t i = 0; i < n_doctors; ++i)
      state_.doctors.emplace_back(pick(bank_.first_names), maybe_mutate(pick(bank_.last_names)));

    NoteBuilder nb;
    render(nb, pick(bank_.headers));
    nb.plain("\n");

    // Body sentences: per-type sampled counts plus one guaranteed sentence
    // for the round-robin type, so rare types keep corpus-level support.
    std::vector<size_t> chosen;
    for (const auto& [type, rate] : profile_.per_note) {
      double r = rate;
      size_t count = static_cast<size_t>(r);
      if (rng_.uniform01() < r - static_cast<double>(count)) ++count;
      for (size_t k = 0; k < count; ++k) chosen.push_back(pick(bank_.by_type.at(type)));
    }
    chosen.push_back(pick(bank_.by_type.at(static_cast<PhiType>(index % kNumPhiTypes))));
    for (size_t k = 0; k < profile_.filler_sentences; ++k) {
      size_t f = rng_.below(bank_.fillers.size());
      chosen.push_back(bank_.sentences.size() + f);  // filler ids offset past sentences
    }
    rng_.shuffle(chosen);

    size_t since_break = 0;
    for (size_t idx : chosen) {
      const std::string& tmpl =
          idx < bank_.sentences.size() ? bank_.sentences[idx]
                                       : bank_.fillers[idx - bank_.sentences.size()];
      render(nb, tmpl);
      ++since_break;
      if (since_break >= 3) {
        nb.plain("\n\n");
        since_break = 0;
      } else {
        nb.plain(" ");
      }
    }
    nb.plain("\n");

    doc.text = std::move(nb.text);
    doc.annotations = std::move(nb.annotations);
    std::sort(doc.annotations.begin(), doc.annotations.end(),
              [](const Annotation& a, const Annotation& b) { return a.start < b.start; });
    doc.metadata.patient_first_name = state_.patient_first;
    doc.metadata.patient_last_name = state_.patient_last;
    for (const auto& [first, last] : state_.doctors) {
      doc.metadata.doctor_first_names.insert(first);
      doc.metadata.doctor_last_names.insert(last);
    }
    validate_annotations(doc);
    return doc;
  }

 private:
  const std::string& pick(const std::vector<std::string>& pool) {
    return pool[rng_.below(pool.size())];
  }
  size_t pick(const std::vector<size_t>& pool) { return pool[rng_.below(pool.size())]; }

  std::string maybe_mutate(std::string last) {
    if (rng_.uniform01() >= profile_.name_mutation_p) return last;
    static const char* suffixes[] = {"son", "sen", "ez", "man", "ton", "berg"};
    return last + suffixes[rng_.below(6)];
  }

  void render(NoteBuilder& nb, const std::string& tmpl) {
    size_t i = 0;
    while (i < tmpl.size()) {
      if (tmpl[i] != '{') {
        nb.plain(std::string_view(&tmpl[i], 1));
        ++i;
        continue;
      }
      size_t close = tmpl.find('}', i);
      require(close != std::string::npos, "unterminated placeholder in template: " + tmpl);
      std::string key = tmpl.substr(i + 1, close - i - 1);
      std::string mod;
      if (size_t colon = key.find(':'); colon != std::string::npos) {
        mod = key.substr(colon + 1);
        key = key.substr(0, colon);
      }
      expand(nb, key, mod);
      i = close + 1;
    }
  }

  void expand(NoteBuilder& nb, const std::string& key, const std::string& mod) {
    auto emit = [&](PhiType type, std::string value) {
      nb.phi(type, apply_mod(std::move(value), mod));
    };
    if (key == "PATIENT_FIRST") emit(PhiType::Patient, state_.patient_first);
    else if (key == "PATIENT_LAST") emit(PhiType::Patient, state_.patient_last);
    else if (key == "PATIENT_FULL")
      emit(PhiType::Patient, state_.patient_first + " " + state_.patient_last);
    else if (key == "DOCTOR_FIRST") emit(PhiType::Doctor, doctor().first);
    else if (key == "DOCTOR_LAST") emit(PhiType::Doctor, doctor().second);
    else if (key == "DOCTOR_FULL") {
      const auto& d = doctor();
      emit(PhiType::Doctor, d.first + " " + d.second);
    } else if (key == "DATE") emit(PhiType::Date, make_date());
    else if (key == "DATE_YEAR") emit(PhiType::Date, std::to_string(2005 + rng_.below(19)));
    else if (key == "PHONE") emit(PhiType::Phone, make_phone());
    else if (key == "ZIP") emit(PhiType::Zip, make_zip());
    else if (key == "ID") emit(PhiType::ID, make_id());
    else if (key == "HOSPITAL") emit(PhiType::Hospital, make_hospital());
    else if (key == "CITY") emit(PhiType::Location, title_case(pick(bank_.cities)));
    else if (key == "STATE") emit(PhiType::State, pick(bank_.states));
    else if (key == "COUNTRY") emit(PhiType::Country, pick(bank_.countries));
    else if (key == "STREET") emit(PhiType::Street, make_street());
    else if (key == "AGE90") emit(PhiType::Age, std::to_string(90 + rng_.below(21)));
    else if (key == "AGE") nb.plain(apply_mod(std::to_string(21 + rng_.below(69)), mod));
    else if (key == "DRUG") nb.plain(apply_mod(pick(bank_.drugs), mod));
    else if (key == "CONDITION") nb.plain(apply_mod(pick(bank_.conditions), mod));
    else if (key == "PROCEDURE") nb.plain(apply_mod(pick(bank_.procedures), mod));
    else throw Error("unknown template placeholder: {" + key + "}");
  }

  const std::pair<std::string, std::string>& doctor() {
    return state_.doctors[rng_.below(state_.doctors.size())];
  }

  std::string make_date() {
    static const char* months[] = {"January", "February", "March",     "April",   "May",
                                   "June",    "July",     "August",    "September", "October",
                                   "November", "December"};
    static const char* abbrev[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                   "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
    int y = 2005 + static_cast<int>(rng_.below(19));
    int m = 1 + static_cast<int>(rng_.below(12));
    int d = 1 + static_cast<int>(rng_.below(28));
    char buf[40];
    switch (rng_.below(5)) {
      case 0: std::snprintf(buf, sizeof buf, "%02d/%02d/%d", m, d, y); break;
      case 1: std::snprintf(buf, sizeof buf, "%d-%02d-%02d", y, m, d); break;
      case 2: std::snprintf(buf, sizeof buf, "%s %d, %d", months[m - 1], d, y); break;
      case 3: std::snprintf(buf, sizeof buf, "%s %d", abbrev[m - 1], d); break;
      default: std::snprintf(buf, sizeof buf, "%02d/%d", m, y); break;
    }
    return buf;
  }

  std::string make_phone() {
    char buf[48];
    int a = 200 + static_cast<int>(rng_.below(700));
    int b = 200 + static_cast<int>(rng_.below(700));
    int c = static_cast<int>(rng_.below(10000));
    switch (rng_.below(3)) {
      case 0: std::snprintf(buf, sizeof buf, "%03d-%03d-%04d", a, b, c); break;
      case 1: std::snprintf(buf, sizeof buf, "(%03d) %03d-%04d", a, b, c); break;
      default: std::snprintf(buf, sizeof buf, "%03d.%03d.%04d", a, b, c); break;
    }
    std::string phone = buf;
    double roll = rng_.uniform01();
    if (roll < profile_.phone_corrupt_p) {
      size_t cut = phone.find_last_of("-. ");
      if (cut != std::string::npos) phone.insert(cut + 1, "|");
    } else if (roll < profile_.phone_corrupt_p + profile_.phone_extension_p) {
      phone += " ext " + std::to_string(1000 + rng_.below(9000));
    }
    return phone;
  }

  std::string make_zip() {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05d", static_cast<int>(1000 + rng_.below(98999)));
    return buf;
  }

  std::string make_id() {
    size_t digits = 6 + rng_.below(3);
    std::string id = std::to_string(1 + rng_.below(9));
    while (id.size() < digits) id += std::to_string(rng_.below(10));
    return id;
  }

  std::string make_hospital() {
    static const char* middles[] = {"General", "Memorial", "Community", "University"};
    static const char* tails[] = {"Hospital", "Medical Center", "Clinic"};
    std::string name = title_case(pick(bank_.cities));
    if (rng_.uniform01() < 0.6) name += std::string(" ") + middles[rng_.below(4)];
    name += std::string(" ") + tails[rng_.below(3)];
    return name;
  }

  std::string make_street() {
    return std::to_string(1 + rng_.below(999)) + " " + pick(bank_.street_names) + " " +
           pick(bank_.street_suffixes);
  }

  const Bank& bank_;
  const GenProfile& profile_;
  Rng& rng_;
  NoteState state_;
};

}  // namespace gen

/// Deterministic synthetic corpus: discharge-summary-like notes rendered
/// from the template bank with sampled PHI values, gold annotations exactly
/// covering every injected value, and a consistent EHR metadata sidecar.
inline std::vector<Document> generate_synthetic_corpus(size_t n_docs, uint64_t seed,
                                                       const GenProfile& profile,
                                                       const fs::path& resource_root) {
  require(n_docs >= 1, "generate_synthetic_corpus: n_docs must be >= 1");
  gen::Bank bank = gen::Bank::load(resource_root);
  Rng rng(seed);
  gen::Generator g(bank, profile, rng);
  std::vector<Document> docs;
  docs.reserve(n_docs);
  for (size_t i = 0; i < n_docs; ++i) docs.push_back(g.make_note(i));
  return docs;
}

}  // namespace deid
