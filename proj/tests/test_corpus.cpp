#include <catch2/catch_amalgamated.hpp>

#include "deid/corpus.hpp"

using namespace deid;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("deid_corpus_test_" + std::to_string(Catch::rngSeed()) + "_" +
            std::to_string(reinterpret_cast<uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_note(const fs::path& dir, const std::string& id, const std::string& text,
                const std::string& ann,
                const std::string& meta =
                    R"({"patient_first_name":"John","patient_last_name":"Doe",)"
                    R"("doctor_first_names":[],"doctor_last_names":[]})") {
  write_file(dir / (id + ".txt"), text);
  write_file(dir / (id + ".ann"), ann);
  write_file(dir / (id + ".meta.json"), meta);
}

std::vector<Document> dummy_corpus(size_t n) {
  std::vector<Document> docs(n);
  for (size_t i = 0; i < n; ++i) {
    docs[i].doc_id = "d" + std::to_string(1000 + i);
    docs[i].text = "x";
    docs[i].metadata.patient_first_name = "A";
    docs[i].metadata.patient_last_name = "B";
  }
  return docs;
}

}  // namespace

TEST_CASE("hipaa_required covers exactly the eight required types") {
  size_t required = 0;
  for (size_t i = 0; i < kNumPhiTypes; ++i)
    if (hipaa_required(static_cast<PhiType>(i))) ++required;
  REQUIRE(required == 8);
  REQUIRE_FALSE(hipaa_required(PhiType::Doctor));
  REQUIRE_FALSE(hipaa_required(PhiType::Hospital));
  REQUIRE_FALSE(hipaa_required(PhiType::State));
  REQUIRE_FALSE(hipaa_required(PhiType::Country));
  REQUIRE(hipaa_required(PhiType::Patient));
  REQUIRE(parse_phi_type("Zip").has_value());
  REQUIRE_FALSE(parse_phi_type("zip").has_value());
}

TEST_CASE("load_corpus reads well-formed notes sorted by doc_id") {
  TempDir dir;
  write_note(dir.path, "b-note", "text b", "");
  write_note(dir.path, "a-note", "Pt: John Doe", "Patient\t4\t8\tJohn\n");
  write_note(dir.path, "c-note", "text c", "");
  auto docs = load_corpus(dir.path);
  REQUIRE(docs.size() == 3);
  REQUIRE(docs[0].doc_id == "a-note");
  REQUIRE(docs[1].doc_id == "b-note");
  REQUIRE(docs[2].doc_id == "c-note");
  REQUIRE(docs[0].annotations.size() == 1);
  REQUIRE(docs[0].annotations[0].surface == "John");
  REQUIRE(docs[0].metadata.patient_first_name == "John");
}

TEST_CASE("empty directory yields an empty corpus") {
  TempDir dir;
  REQUIRE(load_corpus(dir.path).empty());
}

TEST_CASE("surface mismatch is a load error") {
  TempDir dir;
  write_note(dir.path, "n", "Pt: John Doe", "Patient\t5\t9\tJohn\n");
  REQUIRE_THROWS_WITH(load_corpus(dir.path), Catch::Matchers::ContainsSubstring("surface"));
}

TEST_CASE("out-of-range offsets are a load error") {
  TempDir dir;
  write_note(dir.path, "n", "short", "Patient\t2\t99\tJohn\n");
  REQUIRE_THROWS_WITH(load_corpus(dir.path), Catch::Matchers::ContainsSubstring("out of range"));
}

TEST_CASE("overlapping annotations are a load error with offsets") {
  TempDir dir;
  write_note(dir.path, "n", "John Doe here", "Patient\t0\t8\tJohn Doe\nDoctor\t5\t8\tDoe\n");
  REQUIRE_THROWS_WITH(load_corpus(dir.path), Catch::Matchers::ContainsSubstring("overlap"));
}

TEST_CASE("unknown phi type is a load error") {
  TempDir dir;
  write_note(dir.path, "n", "hello", "Wizard\t0\t5\thello\n");
  REQUIRE_THROWS_WITH(load_corpus(dir.path), Catch::Matchers::ContainsSubstring("Wizard"));
}

TEST_CASE("missing sidecars name the document") {
  TempDir dir;
  write_file(dir.path / "lonely.txt", "hi");
  REQUIRE_THROWS_WITH(load_corpus(dir.path), Catch::Matchers::ContainsSubstring("lonely"));
  write_file(dir.path / "lonely.ann", "");
  REQUIRE_THROWS_WITH(load_corpus(dir.path), Catch::Matchers::ContainsSubstring("lonely"));
}

TEST_CASE("write/load round trip reproduces sidecar bytes") {
  TempDir a, b;
  write_note(a.path, "n1", "Pt: John Doe seen 01/02/2015\n",
             "Patient\t4\t8\tJohn\nDate\t18\t28\t01/02/2015\n",
             R"({"patient_first_name":"John","patient_last_name":"Doe",)"
             R"("doctor_first_names":["Amy","Bo"],"doctor_last_names":["Lee"]})");
  auto docs = load_corpus(a.path);
  write_corpus(b.path, docs);
  auto docs2 = load_corpus(b.path);
  REQUIRE(read_file(a.path / "n1.txt") == read_file(b.path / "n1.txt"));
  REQUIRE(read_file(a.path / "n1.ann") == read_file(b.path / "n1.ann"));
  // canonical form is stable: writing what we loaded again is byte-identical
  TempDir c;
  write_corpus(c.path, docs2);
  REQUIRE(read_file(b.path / "n1.ann") == read_file(c.path / "n1.ann"));
  REQUIRE(read_file(b.path / "n1.meta.json") == read_file(c.path / "n1.meta.json"));
  REQUIRE(docs2[0].metadata.doctor_first_names == std::set<std::string>{"Amy", "Bo"});
}

TEST_CASE("split sizes: 10 docs give (7, 1, 2)") {
  auto corpus = dummy_corpus(10);
  DatasetSplit s = split_corpus(corpus, {0.7, 0.1, 0.2}, 0);
  REQUIRE(s.train.size() == 7);
  REQUIRE(s.validation.size() == 1);
  REQUIRE(s.test.size() == 2);
}

TEST_CASE("split sizes: 1635 docs give (1145, 163, 327)") {
  auto corpus = dummy_corpus(1635);
  DatasetSplit s = split_corpus(corpus, {0.7, 0.1, 0.2}, 1);
  REQUIRE(s.train.size() == 1145);
  REQUIRE(s.validation.size() == 163);
  REQUIRE(s.test.size() == 327);
}

TEST_CASE("split is deterministic, disjoint, and covers the corpus") {
  auto corpus = dummy_corpus(53);
  DatasetSplit s1 = split_corpus(corpus, {0.7, 0.1, 0.2}, 99);
  DatasetSplit s2 = split_corpus(corpus, {0.7, 0.1, 0.2}, 99);
  REQUIRE(s1.train == s2.train);
  REQUIRE(s1.validation == s2.validation);
  REQUIRE(s1.test == s2.test);

  std::set<std::string> all;
  for (const auto& part : {s1.train, s1.validation, s1.test})
    for (const auto& id : part) REQUIRE(all.insert(id).second);
  REQUIRE(all.size() == corpus.size());

  DatasetSplit s3 = split_corpus(corpus, {0.7, 0.1, 0.2}, 100);
  REQUIRE(s1.train != s3.train);
}

TEST_CASE("split rejects bad fractions and empty corpora") {
  auto corpus = dummy_corpus(4);
  REQUIRE_THROWS_AS(split_corpus(corpus, {0.7, 0.1, 0.1}, 0), Error);
  REQUIRE_THROWS_AS(split_corpus(corpus, {1.2, -0.4, 0.2}, 0), Error);
  REQUIRE_THROWS_AS(split_corpus({}, {0.7, 0.1, 0.2}, 0), Error);
}

TEST_CASE("split file JSON round trip") {
  auto corpus = dummy_corpus(9);
  DatasetSplit s = split_corpus(corpus, {0.7, 0.1, 0.2}, 5);
  DatasetSplit back = parse_split(render_split(s));
  REQUIRE(back.train == s.train);
  REQUIRE(back.validation == s.validation);
  REQUIRE(back.test == s.test);
}
