#pragma once

#include <array>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "deid/corpus.hpp"
#include "deid/tokenizer.hpp"

namespace deid {

enum class FeatureFamily : uint8_t { Ehr, Morphological, Semantic, Temporal, Gazetteer, Regex };

inline const char* feature_family_name(FeatureFamily f) {
  switch (f) {
    case FeatureFamily::Ehr: return "ehr";
    case FeatureFamily::Morphological: return "morphological";
    case FeatureFamily::Semantic: return "semantic";
    case FeatureFamily::Temporal: return "temporal";
    case FeatureFamily::Gazetteer: return "gazetteer";
    case FeatureFamily::Regex: return "regex";
  }
  return "?";
}

inline std::optional<FeatureFamily> parse_feature_family(std::string_view s) {
  for (auto f : {FeatureFamily::Ehr, FeatureFamily::Morphological, FeatureFamily::Semantic,
                 FeatureFamily::Temporal, FeatureFamily::Gazetteer, FeatureFamily::Regex})
    if (s == feature_family_name(f)) return f;
  return std::nullopt;
}

struct FeatureDef {
  const char* name;
  FeatureFamily family;
};

/// The canonical feature catalog; order here is the vector layout contract.
/// docs/feature-catalog.md documents every entry.
inline constexpr std::array<FeatureDef, 52> kFeatureCatalog = {{
    {"patient_first", FeatureFamily::Ehr},
    {"patient_last", FeatureFamily::Ehr},
    {"doctor_first", FeatureFamily::Ehr},
    {"doctor_last", FeatureFamily::Ehr},
    {"ends_with_s", FeatureFamily::Morphological},
    {"first_letter_capitalized", FeatureFamily::Morphological},
    {"contains_digit", FeatureFamily::Morphological},
    {"is_numeric", FeatureFamily::Morphological},
    {"is_alphabetic", FeatureFamily::Morphological},
    {"is_alphanumeric", FeatureFamily::Morphological},
    {"is_title_case", FeatureFamily::Morphological},
    {"is_all_lower", FeatureFamily::Morphological},
    {"is_all_upper", FeatureFamily::Morphological},
    {"is_stop_word", FeatureFamily::Morphological},
    {"has_person_hypernym", FeatureFamily::Semantic},
    {"has_location_hypernym", FeatureFamily::Semantic},
    {"has_organization_hypernym", FeatureFamily::Semantic},
    {"is_polysemous", FeatureFamily::Semantic},
    {"is_known_lemma", FeatureFamily::Semantic},
    {"is_season", FeatureFamily::Temporal},
    {"is_month", FeatureFamily::Temporal},
    {"is_weekday", FeatureFamily::Temporal},
    {"is_time_of_day", FeatureFamily::Temporal},
    {"is_festivity", FeatureFamily::Temporal},
    {"is_holiday", FeatureFamily::Temporal},
    {"is_fuzzy_quantifier", FeatureFamily::Temporal},
    {"is_future_trigger", FeatureFamily::Temporal},
    {"is_year", FeatureFamily::Temporal},
    {"is_year_with_apostrophe", FeatureFamily::Temporal},
    {"is_cardinal", FeatureFamily::Temporal},
    {"is_decade", FeatureFamily::Temporal},
    {"in_honorifics_doctor", FeatureFamily::Gazetteer},
    {"in_honorifics", FeatureFamily::Gazetteer},
    {"in_medical_specialists", FeatureFamily::Gazetteer},
    {"in_medical_specialties", FeatureFamily::Gazetteer},
    {"in_first_names", FeatureFamily::Gazetteer},
    {"in_last_names", FeatureFamily::Gazetteer},
    {"in_last_name_prefixes", FeatureFamily::Gazetteer},
    {"in_street_suffixes", FeatureFamily::Gazetteer},
    {"in_us_cities", FeatureFamily::Gazetteer},
    {"in_us_states", FeatureFamily::Gazetteer},
    {"in_countries", FeatureFamily::Gazetteer},
    {"in_nationalities", FeatureFamily::Gazetteer},
    {"in_organizations", FeatureFamily::Gazetteer},
    {"in_professions", FeatureFamily::Gazetteer},
    {"re_email", FeatureFamily::Regex},
    {"re_age", FeatureFamily::Regex},
    {"re_date", FeatureFamily::Regex},
    {"re_phone", FeatureFamily::Regex},
    {"re_zip", FeatureFamily::Regex},
    {"re_id_number", FeatureFamily::Regex},
    {"re_mrn", FeatureFamily::Regex},
}};

/// Ordered list of binary features; the order is fixed at construction and
/// serialized with the model, since it defines the feature-vector layout.
struct FeatureSchema {
  struct Entry {
    std::string name;
    FeatureFamily family;
  };
  std::vector<Entry> entries;

  size_t size() const { return entries.size(); }

  bool has_family(FeatureFamily f) const {
    for (const Entry& e : entries)
      if (e.family == f) return true;
    return false;
  }

  uint64_t hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const Entry& e : entries) {
      h = fnv1a64(e.name, h);
      h = fnv1a64("|", h);
      h = fnv1a64(feature_family_name(e.family), h);
      h = fnv1a64(";", h);
    }
    return h;
  }
};

struct FeatureConfig {
  enum class Mode { None, EhrOnly, All, Families };
  Mode mode = Mode::All;
  std::set<FeatureFamily> families;  // used when mode == Families

  static FeatureConfig none() { return {Mode::None, {}}; }
  static FeatureConfig ehr_only() { return {Mode::EhrOnly, {}}; }
  static FeatureConfig all() { return {Mode::All, {}}; }
  static FeatureConfig of_families(std::set<FeatureFamily> fams) {
    return {Mode::Families, std::move(fams)};
  }

  /// Parses "none" | "ehr" | "all" | comma-separated family names.
  static FeatureConfig parse(std::string_view s) {
    if (s == "none") return none();
    if (s == "ehr") return ehr_only();
    if (s == "all") return all();
    std::set<FeatureFamily> fams;
    for (const std::string& part : split(s, ',')) {
      auto f = parse_feature_family(trim(part));
      require(f.has_value(), "unknown feature family: \"" + trim(part) + "\"");
      fams.insert(*f);
    }
    return of_families(std::move(fams));
  }
};

inline FeatureSchema build_schema(const FeatureConfig& config) {
  FeatureSchema s;
  for (const FeatureDef& def : kFeatureCatalog) {
    bool keep = false;
    switch (config.mode) {
      case FeatureConfig::Mode::None: keep = false; break;
      case FeatureConfig::Mode::EhrOnly: keep = def.family == FeatureFamily::Ehr; break;
      case FeatureConfig::Mode::All: keep = true; break;
      case FeatureConfig::Mode::Families: keep = config.families.count(def.family) > 0; break;
    }
    if (keep) s.entries.push_back({def.name, def.family});
  }
  return s;
}

/// Schema restricted to an explicit feature-name list (test and tooling use).
inline FeatureSchema build_schema_from_names(std::span<const std::string> names) {
  FeatureSchema s;
  for (const std::string& name : names) {
    bool found = false;
    for (const FeatureDef& def : kFeatureCatalog)
      if (name == def.name) {
        s.entries.push_back({def.name, def.family});
        found = true;
        break;
      }
    require(found, "unknown feature name: \"" + name + "\"");
  }
  return s;
}

using FeatureVector = std::vector<uint8_t>;

// ---------------------------------------------------------------------------
// Lexical resources

/// Case-folded term sets backing the gazetteer features.
struct GazetteerSet {
  std::set<std::string> honorifics_doctor, honorifics, medical_specialists,
      medical_specialties, first_names, last_names, last_name_prefixes, street_suffixes,
      us_cities, us_states, countries, nationalities, organizations, professions;
};

struct TemporalLexicon {
  std::set<std::string> seasons, months, weekdays, times_of_day, festivities, holidays,
      fuzzy_quantifiers, future_triggers, number_words;
};

/// Binary reduction of hypernym/sense/lemma information, keyed by
/// case-folded lemma.
struct SemanticLexicon {
  struct Flags {
    bool person = false;
    bool location = false;
    bool organization = false;
    bool polysemous = false;
  };
  std::map<std::string, Flags> entries;
};

/// One case-folded term per line; '#' starts a comment.
inline std::set<std::string> load_term_set(const fs::path& path) {
  std::set<std::string> terms;
  for (const std::string& raw : read_lines(path)) {
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (!line.empty()) terms.insert(casefold(line));
  }
  return terms;
}

inline GazetteerSet load_gazetteers(const fs::path& dir) {
  auto need = [&](const char* name) {
    fs::path p = dir / (std::string(name) + ".txt");
    require(fs::exists(p), "missing gazetteer file: " + p.string());
    auto s = load_term_set(p);
    require(!s.empty(), "empty gazetteer: " + p.string());
    return s;
  };
  GazetteerSet g;
  g.honorifics_doctor = need("honorifics_doctor");
  g.honorifics = need("honorifics");
  g.medical_specialists = need("medical_specialists");
  g.medical_specialties = need("medical_specialties");
  g.first_names = need("first_names");
  g.last_names = need("last_names");
  g.last_name_prefixes = need("last_name_prefixes");
  g.street_suffixes = need("street_suffixes");
  g.us_cities = need("us_cities");
  g.us_states = need("us_states");
  g.countries = need("countries");
  g.nationalities = need("nationalities");
  g.organizations = need("organizations");
  g.professions = need("professions");
  return g;
}

inline TemporalLexicon load_temporal_lexicon(const fs::path& dir) {
  auto need = [&](const char* name) {
    fs::path p = dir / (std::string(name) + ".txt");
    require(fs::exists(p), "missing temporal lexicon file: " + p.string());
    auto s = load_term_set(p);
    require(!s.empty(), "empty temporal lexicon: " + p.string());
    return s;
  };
  TemporalLexicon t;
  t.seasons = need("seasons");
  t.months = need("months");
  t.weekdays = need("weekdays");
  t.times_of_day = need("times_of_day");
  t.festivities = need("festivities");
  t.holidays = need("holidays");
  t.fuzzy_quantifiers = need("fuzzy_quantifiers");
  t.future_triggers = need("future_triggers");
  t.number_words = need("number_words");
  return t;
}

/// TSV: lemma<TAB>flag,flag,... with flags from
/// {person, location, organization, polysemous}. A listed lemma with no
/// flags is still a known lemma.
inline SemanticLexicon load_semantic_lexicon(const fs::path& path) {
  SemanticLexicon lex;
  size_t line_no = 0;
  for (const std::string& raw : read_lines(path)) {
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    SemanticLexicon::Flags f;
    if (fields.size() > 1) {
      for (const std::string& flag : split(fields[1], ',')) {
        std::string name = trim(flag);
        if (name.empty()) continue;
        if (name == "person") f.person = true;
        else if (name == "location") f.location = true;
        else if (name == "organization") f.organization = true;
        else if (name == "polysemous") f.polysemous = true;
        else throw Error("semantic lexicon line " + std::to_string(line_no) +
                         ": unknown flag \"" + name + "\"");
      }
    }
    lex.entries[casefold(fields[0])] = f;
  }
  return lex;
}

/// Everything feature extraction can draw on. Immutable after load and
/// shareable across threads.
struct FeatureResources {
  std::optional<std::set<std::string>> stopwords;
  std::optional<GazetteerSet> gazetteers;
  std::optional<TemporalLexicon> temporal;
  std::optional<SemanticLexicon> semantic;
};

/// Loads just the resource families a schema needs from the resource root
/// (layout: stopwords.txt, gazetteers/, temporal/, semantic_lexicon.tsv).
inline FeatureResources load_feature_resources(const fs::path& root,
                                               const FeatureSchema& schema) {
  FeatureResources r;
  if (schema.has_family(FeatureFamily::Morphological)) {
    fs::path p = root / "stopwords.txt";
    require(fs::exists(p), "missing stop-word list: " + p.string());
    r.stopwords = load_term_set(p);
    require(!r.stopwords->empty(), "empty stop-word list: " + p.string());
  }
  if (schema.has_family(FeatureFamily::Gazetteer))
    r.gazetteers = load_gazetteers(root / "gazetteers");
  if (schema.has_family(FeatureFamily::Temporal))
    r.temporal = load_temporal_lexicon(root / "temporal");
  if (schema.has_family(FeatureFamily::Semantic)) {
    fs::path p = root / "semantic_lexicon.tsv";
    r.semantic = fs::exists(p) ? load_semantic_lexicon(p) : SemanticLexicon{};
  }
  return r;
}

// ---------------------------------------------------------------------------
// Per-family extractors. Each returns bits in catalog order for its family.

/// Case-insensitive exact equality of the token against the note's EHR
/// metadata names: patient_first, patient_last, doctor_first, doctor_last.
inline std::array<uint8_t, 4> extract_ehr(const Token& token, const EhrMetadata& meta) {
  std::string t = casefold(token.surface);
  auto any_match = [&](const std::set<std::string>& names) {
    for (const std::string& n : names)
      if (t == casefold(n)) return uint8_t{1};
    return uint8_t{0};
  };
  return {static_cast<uint8_t>(t == casefold(meta.patient_first_name)),
          static_cast<uint8_t>(t == casefold(meta.patient_last_name)),
          any_match(meta.doctor_first_names), any_match(meta.doctor_last_names)};
}

inline std::array<uint8_t, 10> extract_morphological(const Token& token,
                                                     const std::set<std::string>& stopwords) {
  const std::string& s = token.surface;
  bool has_digit = false, has_alpha = false, has_upper = false, has_lower = false;
  bool all_alnum = !s.empty(), all_alpha = !s.empty(), all_digit = !s.empty();
  for (unsigned char c : s) {
    if (is_ascii_digit(c)) has_digit = true;
    if (is_ascii_alpha(c)) has_alpha = true;
    if (is_ascii_upper(c)) has_upper = true;
    if (is_ascii_lower(c)) has_lower = true;
    if (!is_ascii_alpha(c) && !is_ascii_digit(c)) all_alnum = false;
    if (!is_ascii_alpha(c)) all_alpha = false;
    if (!is_ascii_digit(c)) all_digit = false;
  }
  bool first_cap = !s.empty() && is_ascii_upper(static_cast<unsigned char>(s[0]));
  bool rest_lower_only = true;
  for (size_t i = 1; i < s.size(); ++i)
    if (is_ascii_upper(static_cast<unsigned char>(s[i]))) rest_lower_only = false;
  bool ends_s = !s.empty() && (s.back() == 's' || s.back() == 'S');
  return {
      static_cast<uint8_t>(ends_s),
      static_cast<uint8_t>(first_cap),
      static_cast<uint8_t>(has_digit),
      static_cast<uint8_t>(all_digit),
      static_cast<uint8_t>(all_alpha),
      static_cast<uint8_t>(all_alnum && has_alpha && has_digit),
      static_cast<uint8_t>(all_alpha && first_cap && rest_lower_only),
      static_cast<uint8_t>(has_alpha && !has_upper),
      static_cast<uint8_t>(has_alpha && !has_lower),
      static_cast<uint8_t>(stopwords.count(casefold(s)) > 0),
  };
}

inline std::array<uint8_t, 5> extract_semantic(const Token& token, const SemanticLexicon& lex) {
  auto it = lex.entries.find(casefold(token.surface));
  if (it == lex.entries.end()) return {0, 0, 0, 0, 0};
  const auto& f = it->second;
  return {static_cast<uint8_t>(f.person), static_cast<uint8_t>(f.location),
          static_cast<uint8_t>(f.organization), static_cast<uint8_t>(f.polysemous), 1};
}

inline bool is_all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (unsigned char c : s)
    if (!is_ascii_digit(c)) return false;
  return true;
}

inline std::array<uint8_t, 12> extract_temporal(const Token& token, const TemporalLexicon& lex) {
  std::string t = casefold(token.surface);
  const std::string& s = token.surface;
  bool year = false;
  if (s.size() == 4 && is_all_digits(s)) {
    int v = std::stoi(s);
    year = v >= 1900 && v <= 2099;
  }
  // "'99"
  bool year_apos = s.size() == 3 && s[0] == '\'' && is_all_digits(s.substr(1));
  bool cardinal = is_all_digits(s) || lex.number_words.count(t) > 0;
  // "1990s" or "'90s"
  bool decade = (s.size() == 5 && is_all_digits(s.substr(0, 4)) && s[3] == '0' && s[4] == 's') ||
                (s.size() == 4 && s[0] == '\'' && is_all_digits(s.substr(1, 2)) && s[2] == '0' &&
                 s[3] == 's');
  return {
      static_cast<uint8_t>(lex.seasons.count(t) > 0),
      static_cast<uint8_t>(lex.months.count(t) > 0),
      static_cast<uint8_t>(lex.weekdays.count(t) > 0),
      static_cast<uint8_t>(lex.times_of_day.count(t) > 0),
      static_cast<uint8_t>(lex.festivities.count(t) > 0),
      static_cast<uint8_t>(lex.holidays.count(t) > 0),
      static_cast<uint8_t>(lex.fuzzy_quantifiers.count(t) > 0),
      static_cast<uint8_t>(lex.future_triggers.count(t) > 0),
      static_cast<uint8_t>(year),
      static_cast<uint8_t>(year_apos),
      static_cast<uint8_t>(cardinal),
      static_cast<uint8_t>(decade),
  };
}

inline std::array<uint8_t, 14> extract_gazetteer(const Token& token, const GazetteerSet& gaz) {
  std::string t = casefold(token.surface);
  auto in = [&](const std::set<std::string>& s) {
    return static_cast<uint8_t>(s.count(t) > 0);
  };
  return {in(gaz.honorifics_doctor), in(gaz.honorifics), in(gaz.medical_specialists),
          in(gaz.medical_specialties), in(gaz.first_names), in(gaz.last_names),
          in(gaz.last_name_prefixes), in(gaz.street_suffixes), in(gaz.us_cities),
          in(gaz.us_states), in(gaz.countries), in(gaz.nationalities), in(gaz.organizations),
          in(gaz.professions)};
}

/// The canonical regular expressions (see docs/feature-catalog.md). Patterns
/// run over a detokenized +-3 token window; a token's bit fires when a match
/// overlaps the token itself. The phone pattern deliberately stops at the
/// base number: separator-corrupted numbers and extensions do not fire.
struct RegexCatalog {
  std::regex email{R"([A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,})"};
  std::regex age{
      R"((\baged?[ :]+\d{1,3}\b)|(\b\d{1,3}( ?- ?| )years?( ?- ?| )old\b)|(\b\d{1,3} ?y[./ ]?o\b))",
      std::regex::icase};
  std::regex date{
      R"((\b\d{1,2}[/-]\d{1,2}[/-]\d{2,4}\b)|(\b\d{4}[/-]\d{1,2}[/-]\d{1,2}\b)|(\b\d{1,2}[/-]\d{4}\b)|(\b(jan(uary)?|feb(ruary)?|mar(ch)?|apr(il)?|may|jun(e)?|jul(y)?|aug(ust)?|sep(t(ember)?)?|oct(ober)?|nov(ember)?|dec(ember)?)\.? \d{1,2}(st|nd|rd|th)?( ?, ?\d{4})?\b)|(\b\d{1,2} (jan(uary)?|feb(ruary)?|mar(ch)?|apr(il)?|may|jun(e)?|jul(y)?|aug(ust)?|sep(t(ember)?)?|oct(ober)?|nov(ember)?|dec(ember)?)\.?( \d{4})?\b)|(\b(jan(uary)?|feb(ruary)?|mar(ch)?|apr(il)?|may|jun(e)?|jul(y)?|aug(ust)?|sep(t(ember)?)?|oct(ober)?|nov(ember)?|dec(ember)?)\.? \d{4}\b))",
      std::regex::icase};
  std::regex phone{R"((?:\(\d{3}\) ?|\b\d{3}[-. ])\d{3}[-. ]\d{4}\b)"};
  std::regex zip{R"(\b\d{5}(-\d{4})?\b)"};
  std::regex id_number{R"(\b\d{6,10}\b)"};
  std::regex mrn{R"(\b(mrn|medical record number|unit no|record)\b[ #:.]*\d{5,10}\b)",
                 std::regex::icase};
};

inline const RegexCatalog& regex_catalog() {
  static const RegexCatalog catalog;
  return catalog;
}

/// Rebuilds the text window around a token from token offsets: adjacent
/// tokens join without a gap, anything else with a single space.
inline std::array<uint8_t, 7> extract_regex(const Token& token,
                                            std::span<const Token> left_context,
                                            std::span<const Token> right_context) {
  std::string window;
  size_t center_begin = 0, center_end = 0;
  size_t prev_end = 0;
  bool first = true;
  auto append = [&](const Token& t, bool is_center) {
    if (!first && t.start > prev_end) window += ' ';
    if (is_center) center_begin = window.size();
    window += t.surface;
    if (is_center) center_end = window.size();
    prev_end = t.end;
    first = false;
  };
  for (const Token& t : left_context) append(t, false);
  append(token, true);
  for (const Token& t : right_context) append(t, false);

  const RegexCatalog& cat = regex_catalog();
  const std::regex* patterns[7] = {&cat.email, &cat.age, &cat.date, &cat.phone,
                                   &cat.zip, &cat.id_number, &cat.mrn};
  std::array<uint8_t, 7> bits{};
  for (size_t p = 0; p < 7; ++p) {
    auto begin = std::sregex_iterator(window.begin(), window.end(), *patterns[p]);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
      size_t m_begin = static_cast<size_t>(it->position());
      size_t m_end = m_begin + static_cast<size_t>(it->length());
      if (m_begin < center_end && center_begin < m_end) {
        bits[p] = 1;
        break;
      }
    }
  }
  return bits;
}

// ---------------------------------------------------------------------------

/// One FeatureVector per token, bits placed in schema order. Families absent
/// from the schema are never computed; scheduled families with a missing
/// resource raise.
inline std::vector<FeatureVector> extract_all(const Sequence& seq, const EhrMetadata& meta,
                                              const FeatureSchema& schema,
                                              const FeatureResources& res) {
  if (schema.has_family(FeatureFamily::Morphological))
    require(res.stopwords.has_value(), "schema needs morphological features but no stop words loaded");
  if (schema.has_family(FeatureFamily::Gazetteer))
    require(res.gazetteers.has_value(), "schema needs gazetteer features but no gazetteers loaded");
  if (schema.has_family(FeatureFamily::Temporal))
    require(res.temporal.has_value(), "schema needs temporal features but no temporal lexicon loaded");
  if (schema.has_family(FeatureFamily::Semantic))
    require(res.semantic.has_value(), "schema needs semantic features but no semantic lexicon loaded");

  // Resolve each schema entry to (family, offset within family bundle).
  struct Slot {
    FeatureFamily family;
    size_t offset;
  };
  std::vector<Slot> slots;
  slots.reserve(schema.size());
  for (const auto& e : schema.entries) {
    size_t offset = 0;
    bool found = false;
    for (const FeatureDef& def : kFeatureCatalog) {
      if (def.family != e.family) continue;
      if (e.name == def.name) {
        found = true;
        break;
      }
      ++offset;
    }
    require(found, "schema entry is not in the catalog: " + e.name);
    slots.push_back({e.family, offset});
  }

  const auto& tokens = seq.tokens;
  std::vector<FeatureVector> out(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) {
    std::array<uint8_t, 4> ehr{};
    std::array<uint8_t, 10> morph{};
    std::array<uint8_t, 5> sem{};
    std::array<uint8_t, 12> temp{};
    std::array<uint8_t, 14> gaz{};
    std::array<uint8_t, 7> rex{};
    if (schema.has_family(FeatureFamily::Ehr)) ehr = extract_ehr(tokens[i], meta);
    if (schema.has_family(FeatureFamily::Morphological))
      morph = extract_morphological(tokens[i], *res.stopwords);
    if (schema.has_family(FeatureFamily::Semantic)) sem = extract_semantic(tokens[i], *res.semantic);
    if (schema.has_family(FeatureFamily::Temporal)) temp = extract_temporal(tokens[i], *res.temporal);
    if (schema.has_family(FeatureFamily::Gazetteer)) gaz = extract_gazetteer(tokens[i], *res.gazetteers);
    if (schema.has_family(FeatureFamily::Regex)) {
      size_t lo = i >= 3 ? i - 3 : 0;
      size_t hi = std::min(tokens.size(), i + 4);
      rex = extract_regex(tokens[i], std::span(tokens).subspan(lo, i - lo),
                          std::span(tokens).subspan(i + 1, hi - i - 1));
    }
    FeatureVector fv(schema.size(), 0);
    for (size_t k = 0; k < slots.size(); ++k) {
      switch (slots[k].family) {
        case FeatureFamily::Ehr: fv[k] = ehr[slots[k].offset]; break;
        case FeatureFamily::Morphological: fv[k] = morph[slots[k].offset]; break;
        case FeatureFamily::Semantic: fv[k] = sem[slots[k].offset]; break;
        case FeatureFamily::Temporal: fv[k] = temp[slots[k].offset]; break;
        case FeatureFamily::Gazetteer: fv[k] = gaz[slots[k].offset]; break;
        case FeatureFamily::Regex: fv[k] = rex[slots[k].offset]; break;
      }
    }
    out[i] = std::move(fv);
  }
  return out;
}

inline std::string fired_feature_names(const FeatureSchema& schema, const FeatureVector& fv) {
  require(fv.size() == schema.size(), "feature vector length mismatch");
  std::string out;
  for (size_t i = 0; i < fv.size(); ++i) {
    if (!fv[i]) continue;
    if (!out.empty()) out += ',';
    out += schema.entries[i].name;
  }
  return out;
}

}  // namespace deid
