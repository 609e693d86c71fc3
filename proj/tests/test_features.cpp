#include <catch2/catch_amalgamated.hpp>

#include "deid/features.hpp"

using namespace deid;

namespace {

const fs::path kResources = DEID_RESOURCE_DIR;

const FeatureResources& all_resources() {
  static FeatureResources res = load_feature_resources(kResources, build_schema(FeatureConfig::all()));
  return res;
}

Token tok(const std::string& s) { return Token{s, 0, s.size(), 0}; }

/// Window bits for the i-th token of a tokenized string.
std::array<uint8_t, 7> regex_bits(const std::string& text, size_t i) {
  auto tokens = tokenize(text);
  size_t lo = i >= 3 ? i - 3 : 0;
  size_t hi = std::min(tokens.size(), i + 4);
  return extract_regex(tokens[i], std::span(tokens).subspan(lo, i - lo),
                       std::span(tokens).subspan(i + 1, hi - i - 1));
}

enum RegexBit { kEmail = 0, kAge, kDate, kPhone, kZip, kIdNum, kMrn };

}  // namespace

TEST_CASE("build_schema modes") {
  REQUIRE(build_schema(FeatureConfig::none()).size() == 0);
  FeatureSchema ehr = build_schema(FeatureConfig::ehr_only());
  REQUIRE(ehr.size() == 4);
  REQUIRE(ehr.entries[0].name == "patient_first");
  REQUIRE(ehr.entries[1].name == "patient_last");
  REQUIRE(ehr.entries[2].name == "doctor_first");
  REQUIRE(ehr.entries[3].name == "doctor_last");
  REQUIRE(build_schema(FeatureConfig::all()).size() == kFeatureCatalog.size());
  REQUIRE(build_schema(FeatureConfig::all()).size() == 52);

  FeatureSchema sub = build_schema(FeatureConfig::parse("ehr,regex"));
  REQUIRE(sub.size() == 11);
  REQUIRE_THROWS_WITH(FeatureConfig::parse("ehr,swahili"),
                      Catch::Matchers::ContainsSubstring("swahili"));
}

TEST_CASE("schema order and hash are stable; different schemas differ") {
  FeatureSchema a = build_schema(FeatureConfig::all());
  FeatureSchema b = build_schema(FeatureConfig::all());
  REQUIRE(a.hash() == b.hash());
  for (size_t i = 0; i < a.size(); ++i) REQUIRE(a.entries[i].name == b.entries[i].name);
  REQUIRE(a.hash() != build_schema(FeatureConfig::ehr_only()).hash());
  REQUIRE(build_schema(FeatureConfig::none()).hash() !=
          build_schema(FeatureConfig::ehr_only()).hash());
}

TEST_CASE("ehr features: case-insensitive exact match, no substrings") {
  EhrMetadata meta;
  meta.patient_first_name = "John";
  meta.patient_last_name = "Doe";
  meta.doctor_last_names = {"Smith", "Lee"};
  auto bits = extract_ehr(tok("john"), meta);
  REQUIRE(bits == std::array<uint8_t, 4>{1, 0, 0, 0});
  REQUIRE(extract_ehr(tok("Johnson"), meta) == std::array<uint8_t, 4>{0, 0, 0, 0});
  REQUIRE(extract_ehr(tok("Smith"), meta) == std::array<uint8_t, 4>{0, 0, 0, 1});
  REQUIRE(extract_ehr(tok("DOE"), meta) == std::array<uint8_t, 4>{0, 1, 0, 0});
}

TEST_CASE("morphological predicates") {
  const auto& stop = *all_resources().stopwords;
  // order: ends_s, first_cap, digit, numeric, alpha, alnum, title, lower, upper, stopword
  REQUIRE(extract_morphological(tok("Notes"), stop) ==
          std::array<uint8_t, 10>{1, 1, 0, 0, 1, 0, 1, 0, 0, 0});
  REQUIRE(extract_morphological(tok("A1c"), stop) ==
          std::array<uint8_t, 10>{0, 1, 1, 0, 0, 1, 0, 0, 0, 0});
  REQUIRE(extract_morphological(tok("the"), stop) ==
          std::array<uint8_t, 10>{0, 0, 0, 0, 1, 0, 0, 1, 0, 1});
  REQUIRE(extract_morphological(tok("1234"), stop) ==
          std::array<uint8_t, 10>{0, 0, 1, 1, 0, 0, 0, 0, 0, 0});
  REQUIRE(extract_morphological(tok("MRN"), stop)[8] == 1);   // all upper
  REQUIRE(extract_morphological(tok("-"), stop) ==
          std::array<uint8_t, 10>{0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
}

TEST_CASE("temporal features") {
  const auto& lex = *all_resources().temporal;
  auto at = [&](const std::string& s) { return extract_temporal(tok(s), lex); };
  // order: season, month, weekday, time, festivity, holiday, fuzzy, future,
  //        year, year', cardinal, decade
  REQUIRE(at("January")[1] == 1);
  REQUIRE(at("Monday")[2] == 1);
  REQUIRE(at("winter")[0] == 1);
  REQUIRE(at("tomorrow")[7] == 1);
  REQUIRE(at("approximately")[6] == 1);
  REQUIRE(at("2014")[8] == 1);
  REQUIRE(at("1899")[8] == 0);
  REQUIRE(at("2100")[8] == 0);
  REQUIRE(at("'99")[9] == 1);
  REQUIRE(at("seven")[10] == 1);
  REQUIRE(at("2014")[10] == 1);  // digit strings are cardinals too
  REQUIRE(at("1990s")[11] == 1);
  REQUIRE(at("'90s")[11] == 1);
  REQUIRE(at("1991s")[11] == 0);
  REQUIRE(at("christmas")[5] == 1);
}

TEST_CASE("gazetteer features are case-insensitive membership") {
  const auto& gaz = *all_resources().gazetteers;
  auto at = [&](const std::string& s) { return extract_gazetteer(tok(s), gaz); };
  // order: hon_doc, hon, specialists, specialties, first, last, prefix,
  //        street_suffix, city, state, country, nationality, org, profession
  REQUIRE(at("Dr")[0] == 1);
  REQUIRE(at("Mrs")[1] == 1);
  REQUIRE(at("cardiologist")[2] == 1);
  REQUIRE(at("cardiology")[3] == 1);
  REQUIRE(at("John")[4] == 1);
  REQUIRE(at("SMITH")[5] == 1);
  REQUIRE(at("van")[6] == 1);
  REQUIRE(at("Avenue")[7] == 1);
  REQUIRE(at("Boston")[8] == 1);
  REQUIRE(at("Massachusetts")[9] == 1);
  REQUIRE(at("MA")[9] == 1);
  REQUIRE(at("Canada")[10] == 1);
  REQUIRE(at("irish")[11] == 1);
  REQUIRE(at("Hospital")[12] == 1);
  REQUIRE(at("nurse")[13] == 1);
  REQUIRE(at("xyzzy") == std::array<uint8_t, 14>{});
}

TEST_CASE("semantic lexicon flags") {
  const auto& lex = *all_resources().semantic;
  // order: person, location, organization, polysemous, known
  auto nurse = extract_semantic(tok("nurse"), lex);
  REQUIRE(nurse[0] == 1);
  REQUIRE(nurse[4] == 1);
  auto bank = extract_semantic(tok("bank"), lex);
  REQUIRE(bank[3] == 1);
  REQUIRE(extract_semantic(tok("qwertyuiop"), lex) == std::array<uint8_t, 5>{0, 0, 0, 0, 0});
  auto hosp = extract_semantic(tok("Hospital"), lex);
  REQUIRE(hosp[1] == 1);
  REQUIRE(hosp[2] == 1);
  SemanticLexicon empty;
  REQUIRE(extract_semantic(tok("nurse"), empty) == std::array<uint8_t, 5>{0, 0, 0, 0, 0});
}

TEST_CASE("regex: phones fire where the window covers a full number") {
  // A 5-token number: only tokens whose +-3 window spans the whole pattern
  // can fire. Edge tokens of long patterns see a truncated window.
  std::string s = "Call 617-555-1234 now";
  REQUIRE(regex_bits(s, 2)[kPhone] == 1);  // "-"
  REQUIRE(regex_bits(s, 3)[kPhone] == 1);  // "555"
  REQUIRE(regex_bits(s, 4)[kPhone] == 1);  // "-"
  REQUIRE(regex_bits(s, 1)[kPhone] == 0);  // "617" cannot see the last group
  REQUIRE(regex_bits(s, 0)[kPhone] == 0);  // "Call"

  std::string ext = "at 617-690-4031 ext 6599 today";
  auto tokens = tokenize(ext);
  REQUIRE(tokens[6].surface == "ext");
  REQUIRE(regex_bits(ext, 3)[kPhone] == 1);  // "690"
  REQUIRE(regex_bits(ext, 4)[kPhone] == 1);  // "-"
  REQUIRE(regex_bits(ext, 5)[kPhone] == 0);  // "4031" cannot see the area code
  REQUIRE(regex_bits(ext, 6)[kPhone] == 0);  // "ext"
  REQUIRE(regex_bits(ext, 7)[kPhone] == 0);  // "6599"

  std::string corrupt = "fax 617-554-|2395 today";
  for (size_t i = 1; i < 7; ++i) REQUIRE(regex_bits(corrupt, i)[kPhone] == 0);

  REQUIRE(regex_bits("(617) 555-1234", 2)[kPhone] == 1);   // "617"
  REQUIRE(regex_bits("617.555.1234", 2)[kPhone] == 1);     // "555"
}

TEST_CASE("regex: zip, id, mrn") {
  REQUIRE(regex_bits("Boston MA 02139", 2)[kZip] == 1);
  REQUIRE(regex_bits("Boston MA 02139", 2)[kIdNum] == 0);
  REQUIRE(regex_bits("accession 4482913 noted", 1)[kIdNum] == 1);
  REQUIRE(regex_bits("accession 4482913 noted", 1)[kMrn] == 0);
  auto mrn = regex_bits("MRN: 4482913 on file", 2);
  REQUIRE(mrn[kMrn] == 1);
  REQUIRE(mrn[kIdNum] == 1);
  REQUIRE(regex_bits("Unit No: 2243556", 3)[kMrn] == 1);
}

TEST_CASE("regex: dates in numeric and month-name forms") {
  REQUIRE(regex_bits("on 03/12/2014 the", 3)[kDate] == 1);    // "12", window spans all
  REQUIRE(regex_bits("on 2014-03-12 the", 3)[kDate] == 1);
  REQUIRE(regex_bits("on March 12, 2014 the", 1)[kDate] == 1);
  REQUIRE(regex_bits("on March 12, 2014 the", 4)[kDate] == 1);  // "2014"
  REQUIRE(regex_bits("on Jan 5 the", 1)[kDate] == 1);
  REQUIRE(regex_bits("on 03/2014 the", 1)[kDate] == 1);
  REQUIRE(regex_bits("on 03/2014 the", 3)[kDate] == 1);
  REQUIRE(regex_bits("take 10 of 20", 1)[kDate] == 0);
}

TEST_CASE("regex: ages need a cue") {
  REQUIRE(regex_bits("a 92 year old male", 1)[kAge] == 1);
  REQUIRE(regex_bits("a 92-year-old male", 3)[kAge] == 1);  // "year"
  REQUIRE(regex_bits("a 92-year-old male", 5)[kAge] == 0);  // "old" cannot see the digits
  REQUIRE(regex_bits("aged 92 at admission", 1)[kAge] == 1);
  REQUIRE(regex_bits("a 92 yo male", 1)[kAge] == 1);
  REQUIRE(regex_bits("take 92 tablets", 1)[kAge] == 0);
}

TEST_CASE("regex: email fires on tokens that see the whole address") {
  REQUIRE(regex_bits("mail jdoe@example.org today", 2)[kEmail] == 1);  // "@"
  REQUIRE(regex_bits("mail jdoe@example.org today", 3)[kEmail] == 1);  // "example"
  REQUIRE(regex_bits("mail jdoe@example.org today", 0)[kEmail] == 0);
}

TEST_CASE("extract_all places bits by schema order and skips absent families") {
  std::string text = "Dr Smith called";
  Sequence seq{tokenize(text), "d"};
  EhrMetadata meta;
  meta.patient_first_name = "John";
  meta.patient_last_name = "Smith";

  FeatureSchema none = build_schema(FeatureConfig::none());
  auto fv0 = extract_all(seq, meta, none, {});
  REQUIRE(fv0.size() == 3);
  REQUIRE(fv0[0].empty());

  FeatureSchema ehr = build_schema(FeatureConfig::ehr_only());
  auto fv1 = extract_all(seq, meta, ehr, {});
  REQUIRE(fv1[1] == FeatureVector{0, 1, 0, 0});  // "Smith" = patient last name
  int total = 0;
  for (const auto& fv : fv1)
    for (uint8_t b : fv) total += b;
  REQUIRE(total == 1);

  // scheduled family without its resource is an error
  FeatureSchema morph = build_schema(FeatureConfig::parse("morphological"));
  REQUIRE_THROWS_AS(extract_all(seq, meta, morph, {}), Error);
}

TEST_CASE("family isolation: dropping a family leaves other values unchanged") {
  std::string text = "Dr Smith of Boston called 617-555-1234 on 03/12/2014";
  Sequence seq{tokenize(text), "d"};
  EhrMetadata meta;
  meta.patient_first_name = "John";
  meta.patient_last_name = "Smith";

  FeatureSchema all = build_schema(FeatureConfig::all());
  FeatureSchema no_gaz = build_schema(FeatureConfig::parse("ehr,morphological,semantic,temporal,regex"));
  auto full = extract_all(seq, meta, all, all_resources());
  auto reduced = extract_all(seq, meta, no_gaz, all_resources());
  for (size_t t = 0; t < seq.tokens.size(); ++t) {
    size_t k = 0;
    for (size_t i = 0; i < all.size(); ++i) {
      if (all.entries[i].family == FeatureFamily::Gazetteer) continue;
      REQUIRE(full[t][i] == reduced[t][k]);
      ++k;
    }
  }
}

TEST_CASE("feature golden: fixture note reproduces the frozen bit assignments") {
  std::string text =
      "Name: DOE, JOHN\n"
      "MRN: 4482913\n"
      "\n"
      "Dr. Susan Smith of Boston General Hospital examined the patient on March 12, 2014.\n"
      "Call 617-690-4031 ext 6599 with questions.\n"
      "A 92-year-old from Springfield, MA 02139 was seen at 24 Oak Street.\n"
      "Next visit tomorrow with approximately few labs.\n"
      "The patient responded well to Natrecor in the '90s.\n";
  EhrMetadata meta;
  meta.patient_first_name = "John";
  meta.patient_last_name = "Doe";
  meta.doctor_first_names = {"Susan"};
  meta.doctor_last_names = {"Smith"};
  FeatureSchema schema = build_schema(FeatureConfig::all());
  std::string got;
  auto tokens = tokenize(text);
  for (const Sequence& seq : segment(tokens, text, 250, "fixture")) {
    auto feats = extract_all(seq, meta, schema, all_resources());
    for (size_t i = 0; i < seq.tokens.size(); ++i)
      got += seq.tokens[i].surface + "\t" + fired_feature_names(schema, feats[i]) + "\n";
    got += "\n";
  }
  REQUIRE(got == read_file(fs::path(DEID_TEST_DATA_DIR) / "feature_golden.tsv"));
}

TEST_CASE("extraction is pure and case-insensitive for gazetteer/EHR families") {
  EhrMetadata meta;
  meta.patient_first_name = "Mary";
  meta.patient_last_name = "Jones";
  FeatureSchema schema = build_schema(FeatureConfig::parse("ehr,gazetteer"));

  std::string a = "JONES saw boston";
  std::string b = "jones saw BOSTON";
  Sequence sa{tokenize(a), "d"}, sb{tokenize(b), "d"};
  auto fa = extract_all(sa, meta, schema, all_resources());
  auto fb = extract_all(sb, meta, schema, all_resources());
  REQUIRE(fa == fb);
  auto fa2 = extract_all(sa, meta, schema, all_resources());
  REQUIRE(fa == fa2);
}
