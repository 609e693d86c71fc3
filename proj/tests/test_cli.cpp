#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <sys/wait.h>

#include <json.hpp>

#include "deid/common.hpp"

using namespace deid;

namespace {

const std::string kCli = DEID_CLI_PATH;
const std::string kRes = DEID_RESOURCE_DIR;

int run(const std::string& args, const fs::path& log) {
  std::string cmd = kCli + " " + args + " > " + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() / ("deid_cli_" + std::to_string(reinterpret_cast<uintptr_t>(this)));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }
  fs::path log() const { return dir / "log.txt"; }
  std::string log_text() const { return read_file(log()); }
};

std::string tiny_config_json() {
  return R"({"d_char":6,"d_char_lstm":6,"d_token":12,"d_label_lstm":12,"d_feat":6,)"
         R"("learning_rate":0.02,"max_epochs":2,"patience":5})";
}

}  // namespace

TEST_CASE("gen-corpus writes triples deterministically; --n 0 is a usage error") {
  Sandbox sb;
  fs::path c1 = sb.dir / "c1", c2 = sb.dir / "c2";
  REQUIRE(run("gen-corpus --n 4 --seed 1 --out " + c1.string() + " --resources " + kRes,
              sb.log()) == 0);
  REQUIRE(run("gen-corpus --n 4 --seed 1 --out " + c2.string() + " --resources " + kRes,
              sb.log()) == 0);
  for (int i = 0; i < 4; ++i) {
    std::string id = "note-0000" + std::to_string(i);
    for (const char* ext : {".txt", ".ann", ".meta.json"}) {
      REQUIRE(fs::exists(c1 / (id + ext)));
      REQUIRE(read_file(c1 / (id + ext)) == read_file(c2 / (id + ext)));
    }
  }
  REQUIRE(run("gen-corpus --n 0 --out " + (sb.dir / "c0").string(), sb.log()) == 2);
  REQUIRE(run("gen-corpus --out " + (sb.dir / "c0").string(), sb.log()) == 2);
}

TEST_CASE("feature-dump emits fired features and token columns") {
  Sandbox sb;
  fs::path corpus = sb.dir / "corpus";
  REQUIRE(run("gen-corpus --n 2 --seed 3 --out " + corpus.string() + " --resources " + kRes,
              sb.log()) == 0);
  fs::path fd = sb.dir / "features.tsv";
  REQUIRE(run("feature-dump --corpus " + corpus.string() + " --features all --out " +
                  fd.string() + " --resources " + kRes,
              sb.log()) == 0);
  std::string text = read_file(fd);
  REQUIRE(text.find('\t') != std::string::npos);
  REQUIRE(text.find("first_letter_capitalized") != std::string::npos);

  fs::path td = sb.dir / "tokens.tsv";
  REQUIRE(run("feature-dump --corpus " + corpus.string() + " --format tokens --out " +
                  td.string() + " --resources " + kRes,
              sb.log()) == 0);
  auto lines = read_lines(td);
  REQUIRE(!lines.empty());
  auto cols = split(lines[0], '\t');
  REQUIRE(cols.size() == 4);  // surface, start, end, label
}

TEST_CASE("train/predict/evaluate/deidentify round trip") {
  Sandbox sb;
  fs::path corpus = sb.dir / "corpus";
  REQUIRE(run("gen-corpus --n 12 --seed 5 --out " + corpus.string() + " --resources " + kRes,
              sb.log()) == 0);
  write_file(sb.dir / "config.json", tiny_config_json());

  fs::path run1 = sb.dir / "run1", run2 = sb.dir / "run2";
  std::string train_args = "train --corpus " + corpus.string() + " --features ehr --config " +
                           (sb.dir / "config.json").string() + " --criterion recall --seed 4 " +
                           "--resources " + kRes + " --out ";
  REQUIRE(run(train_args + run1.string(), sb.log()) == 0);
  REQUIRE(fs::exists(run1 / "manifest.json"));
  REQUIRE(fs::exists(run1 / "split.json"));

  nlohmann::json manifest = nlohmann::json::parse(read_file(run1 / "manifest.json"));
  REQUIRE(manifest.at("schema_size") == 4);  // ehr mode
  REQUIRE(manifest.at("criterion") == "recall");
  size_t active = manifest.at("runs")[0].at("active_epoch").get<size_t>();

  // determinism: identical flags give an identical manifest
  REQUIRE(run(train_args + run2.string(), sb.log()) == 0);
  REQUIRE(read_file(run1 / "manifest.json") == read_file(run2 / "manifest.json"));

  char name[32];
  std::snprintf(name, sizeof name, "epoch_%03zu.ckpt", active);
  fs::path model = run1 / "seed_4" / name;
  REQUIRE(fs::exists(model));

  fs::path pred = sb.dir / "pred";
  REQUIRE(run("predict --corpus " + corpus.string() + " --model " + model.string() +
                  " --out " + pred.string() + " --resources " + kRes,
              sb.log()) == 0);
  REQUIRE(fs::exists(pred / "note-00000.ann"));

  // schema-hash mismatch between model and requested features fails
  REQUIRE(run("predict --corpus " + corpus.string() + " --model " + model.string() +
                  " --features all --out " + (sb.dir / "p2").string() + " --resources " + kRes,
              sb.log()) == 1);
  REQUIRE(sb.log_text().find("schema") != std::string::npos);

  fs::path report = sb.dir / "report";
  REQUIRE(run("evaluate --corpus " + corpus.string() + " --pred " + pred.string() + " --out " +
                  report.string(),
              sb.log()) == 0);
  REQUIRE(fs::exists(report.string() + ".tsv"));
  REQUIRE(fs::exists(report.string() + ".json"));
  REQUIRE(read_lines(report.string() + ".tsv")[0] == "scope\tprecision\trecall\tf1\tsupport");

  // evaluating gold against itself scores 100 everywhere
  fs::path gold_pred = sb.dir / "gold_pred";
  fs::create_directories(gold_pred);
  for (const auto& entry : fs::directory_iterator(corpus))
    if (entry.path().extension() == ".ann")
      fs::copy_file(entry.path(), gold_pred / entry.path().filename());
  fs::path perfect = sb.dir / "perfect";
  REQUIRE(run("evaluate --corpus " + corpus.string() + " --pred " + gold_pred.string() +
                  " --out " + perfect.string(),
              sb.log()) == 0);
  for (const std::string& line : read_lines(perfect.string() + ".tsv")) {
    if (line.starts_with("scope")) continue;
    auto cols = split(line, '\t');
    REQUIRE(cols[1] == "100.000");
    REQUIRE(cols[2] == "100.000");
  }

  fs::path redacted = sb.dir / "redacted";
  REQUIRE(run("deidentify --corpus " + corpus.string() + " --model " + model.string() +
                  " --out " + redacted.string() + " --resources " + kRes,
              sb.log()) == 0);
  std::string out_text = read_file(redacted / "note-00000.txt");
  // redaction markers appear, and no predicted span text survives
  fs::path pred0 = pred / "note-00000.ann";
  for (const std::string& line : read_lines(pred0)) {
    if (line.empty()) continue;
    auto cols = split(line, '\t');
    REQUIRE(out_text.find("[**" + to_upper(cols[0]) + "**]") != std::string::npos);
  }
}

TEST_CASE("predict on an empty corpus succeeds with empty output") {
  Sandbox sb;
  fs::path corpus = sb.dir / "corpus";
  fs::path empty = sb.dir / "empty";
  fs::create_directories(empty);
  REQUIRE(run("gen-corpus --n 12 --seed 2 --out " + corpus.string() + " --resources " + kRes,
              sb.log()) == 0);
  write_file(sb.dir / "config.json", tiny_config_json());
  fs::path rundir = sb.dir / "run";
  REQUIRE(run("train --corpus " + corpus.string() + " --features none --config " +
                  (sb.dir / "config.json").string() + " --max-epochs 1 --resources " + kRes +
                  " --out " + rundir.string(),
              sb.log()) == 0);
  fs::path model = rundir / "seed_0" / "epoch_001.ckpt";
  REQUIRE(fs::exists(model));
  REQUIRE(run("predict --corpus " + empty.string() + " --model " + model.string() + " --out " +
                  (sb.dir / "pred").string() + " --resources " + kRes,
              sb.log()) == 0);
}

TEST_CASE("missing corpus is a runtime error with nonzero exit") {
  Sandbox sb;
  REQUIRE(run("train --corpus /nonexistent --out " + (sb.dir / "r").string(), sb.log()) == 1);
  REQUIRE(run("bogus-subcommand", sb.log()) == 2);
}
