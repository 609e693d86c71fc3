// deid: feature-augmented neural de-identification of patient notes.
//
// Subcommands: gen-corpus, feature-dump, train, predict, evaluate, deidentify.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "deid/pipeline.hpp"
#include "deid/synthetic.hpp"
#include "deid/training.hpp"

using namespace deid;

namespace {

fs::path resource_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("DEID_RESOURCES")) return env;
  return "resources";
}

std::vector<uint64_t> parse_seeds(const std::string& csv, uint64_t single) {
  if (csv.empty()) return {single};
  std::vector<uint64_t> seeds;
  for (const std::string& part : split(csv, ','))
    seeds.push_back(std::stoull(trim(part)));
  return seeds;
}

void print_support_summary(const std::vector<Document>& docs) {
  std::map<PhiType, size_t> support;
  for (const Document& d : docs)
    for (const Annotation& a : d.annotations) ++support[a.phi_type];
  std::cout << "type\tannotations\n";
  for (size_t i = 0; i < kNumPhiTypes; ++i) {
    auto t = static_cast<PhiType>(i);
    std::cout << phi_type_name(t) << "\t" << support[t] << "\n";
  }
}

struct TrainFlags {
  std::string corpus, out, embeddings, features = "all", criterion = "f1";
  std::string seeds_csv, split_file, config_file, resources;
  uint64_t seed = 0, split_seed = 0;
  // negative sentinels: flag not given, keep config-file/default value
  double lr = -1, clip = -1, dropout = -1;
  long max_epochs = -1, patience = -1;
};

int cmd_train(const TrainFlags& f) {
  Config cfg;
  if (!f.config_file.empty())
    cfg = nlohmann::json::parse(read_file(f.config_file)).get<Config>();
  if (f.lr >= 0) cfg.learning_rate = f.lr;
  if (f.clip >= 0) cfg.clip_norm = f.clip;
  if (f.dropout >= 0) cfg.dropout_p = f.dropout;
  if (f.max_epochs >= 0) cfg.max_epochs = static_cast<size_t>(f.max_epochs);
  if (f.patience >= 0) cfg.patience = static_cast<size_t>(f.patience);
  cfg.validate();

  auto corpus = load_corpus(f.corpus);
  require(!corpus.empty(), "corpus is empty: " + f.corpus);
  DatasetSplit split_set = f.split_file.empty()
                               ? split_corpus(corpus, {0.7, 0.1, 0.2}, f.split_seed)
                               : parse_split(read_file(f.split_file));
  fs::create_directories(f.out);
  write_file(fs::path(f.out) / "split.json", render_split(split_set));

  FeatureSchema schema = build_schema(FeatureConfig::parse(f.features));
  FeatureResources resources = load_feature_resources(resource_root(f.resources), schema);
  std::optional<fs::path> pretrained;
  if (!f.embeddings.empty()) pretrained = f.embeddings;

  TrainingData data =
      TrainingData::build(corpus, split_set, schema, resources, cfg.max_sequence_length, pretrained);
  SelectionCriterion criterion = parse_criterion(f.criterion);
  std::vector<uint64_t> seeds = parse_seeds(f.seeds_csv, f.seed);

  ExperimentResult result = run_experiment(data, cfg, seeds, criterion, f.out, pretrained);
  for (const RunResult& run : result.runs) {
    const EpochRecord& sel = run.records[run.active_epoch - 1];
    const auto& bh = sel.validation.binary_hipaa();
    std::cout << "seed " << run.seed << ": selected epoch " << run.active_epoch << " by "
              << criterion_name(criterion) << " (val P=" << format_pct(bh.precision)
              << " R=" << format_pct(bh.recall) << " F1=" << format_pct(bh.f1) << ")\n";
  }
  std::cout << "\nmean test metrics over " << result.runs.size() << " run(s):\n"
            << render_report_tsv(result.mean_test);
  std::cout << "manifest: " << (fs::path(f.out) / "manifest.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature-augmented bi-LSTM-CRF de-identifier for patient notes"};
  app.require_subcommand(1);

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic annotated corpus");
  size_t gen_n = 0;
  uint64_t gen_seed = 0;
  std::string gen_out, gen_profile, gen_resources;
  gen->add_option("--n", gen_n, "number of notes")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--profile", gen_profile, "JSON profile overriding per-type rates");
  gen->add_option("--resources", gen_resources, "resource root (templates, pools)");

  // feature-dump
  auto* dump = app.add_subcommand("feature-dump", "print fired features or tokenization");
  std::string dump_corpus, dump_features = "all", dump_format = "features", dump_out,
              dump_resources;
  dump->add_option("--corpus", dump_corpus, "corpus directory")->required();
  dump->add_option("--features", dump_features, "none|ehr|all|family list");
  dump->add_option("--format", dump_format, "features|tokens")
      ->check(CLI::IsMember({"features", "tokens"}));
  dump->add_option("--out", dump_out, "output file (stdout when omitted)");
  dump->add_option("--resources", dump_resources, "resource root");

  // train
  auto* train_cmd = app.add_subcommand("train", "train models and report test metrics");
  TrainFlags tf;
  train_cmd->add_option("--corpus", tf.corpus, "corpus directory")->required();
  train_cmd->add_option("--out", tf.out, "run directory")->required();
  train_cmd->add_option("--embeddings", tf.embeddings, "pre-trained word vectors (text format)");
  train_cmd->add_option("--features", tf.features, "none|ehr|all|family list");
  train_cmd->add_option("--criterion", tf.criterion, "epoch selection: f1|recall")
      ->check(CLI::IsMember({"f1", "recall"}));
  train_cmd->add_option("--seed", tf.seed, "model seed");
  train_cmd->add_option("--seeds", tf.seeds_csv, "comma-separated seeds for multi-run");
  train_cmd->add_option("--split-seed", tf.split_seed, "corpus split seed");
  train_cmd->add_option("--split", tf.split_file, "existing split JSON to reuse");
  train_cmd->add_option("--config", tf.config_file, "JSON config file");
  train_cmd->add_option("--max-epochs", tf.max_epochs, "epoch cap");
  train_cmd->add_option("--patience", tf.patience, "early-stopping patience");
  train_cmd->add_option("--lr", tf.lr, "learning rate");
  train_cmd->add_option("--clip", tf.clip, "gradient clip norm");
  train_cmd->add_option("--dropout", tf.dropout, "dropout probability");
  train_cmd->add_option("--resources", tf.resources, "resource root");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "write standoff predictions");
  std::string pr_corpus, pr_model, pr_out, pr_features, pr_resources;
  predict_cmd->add_option("--corpus", pr_corpus, "corpus directory")->required();
  predict_cmd->add_option("--model", pr_model, "model checkpoint")->required();
  predict_cmd->add_option("--out", pr_out, "output directory")->required();
  predict_cmd->add_option("--features", pr_features,
                          "expected feature mode; errors if it mismatches the model");
  predict_cmd->add_option("--resources", pr_resources, "resource root");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "score predictions against gold");
  std::string ev_corpus, ev_pred, ev_out;
  eval_cmd->add_option("--corpus", ev_corpus, "gold corpus directory")->required();
  eval_cmd->add_option("--pred", ev_pred, "directory of predicted .ann files")->required();
  eval_cmd->add_option("--out", ev_out, "report prefix (writes .tsv and .json)");

  // deidentify
  auto* redact_cmd = app.add_subcommand("deidentify", "emit notes with PHI replaced");
  std::string rd_corpus, rd_model, rd_out, rd_resources;
  redact_cmd->add_option("--corpus", rd_corpus, "corpus directory")->required();
  redact_cmd->add_option("--model", rd_model, "model checkpoint")->required();
  redact_cmd->add_option("--out", rd_out, "output directory")->required();
  redact_cmd->add_option("--resources", rd_resources, "resource root");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      GenProfile profile;
      if (!gen_profile.empty())
        profile = GenProfile::from_json(nlohmann::json::parse(read_file(gen_profile)));
      auto docs = generate_synthetic_corpus(gen_n, gen_seed, profile, resource_root(gen_resources));
      write_corpus(gen_out, docs);
      std::cout << "wrote " << docs.size() << " notes to " << gen_out << "\n";
      print_support_summary(docs);
    } else if (dump->parsed()) {
      auto corpus = load_corpus(dump_corpus);
      FeatureSchema schema = build_schema(FeatureConfig::parse(dump_features));
      FeatureResources resources;
      if (dump_format == "features")
        resources = load_feature_resources(resource_root(dump_resources), schema);
      std::string out;
      for (const Document& doc : corpus) {
        auto tokens = tokenize(doc.text);
        for (const Sequence& seq : segment(tokens, doc.text, 250, doc.doc_id)) {
          if (dump_format == "tokens") {
            auto labels = project_labels(seq, doc.annotations);
            for (size_t i = 0; i < seq.tokens.size(); ++i) {
              const Token& t = seq.tokens[i];
              out += t.surface + "\t" + std::to_string(t.start) + "\t" +
                     std::to_string(t.end) + "\t" + labels[i].to_string() + "\n";
            }
          } else {
            auto feats = extract_all(seq, doc.metadata, schema, resources);
            for (size_t i = 0; i < seq.tokens.size(); ++i)
              out += seq.tokens[i].surface + "\t" + fired_feature_names(schema, feats[i]) + "\n";
          }
          out += "\n";
        }
      }
      if (dump_out.empty()) std::cout << out;
      else write_file(dump_out, out);
    } else if (train_cmd->parsed()) {
      return cmd_train(tf);
    } else if (predict_cmd->parsed()) {
      DeidModel model = load_checkpoint(pr_model);
      if (!pr_features.empty())
        check_schema_compatible(model, build_schema(FeatureConfig::parse(pr_features)));
      auto corpus = load_corpus(pr_corpus);
      FeatureResources resources =
          load_feature_resources(resource_root(pr_resources), model.schema);
      fs::create_directories(pr_out);
      for (const Document& doc : corpus) {
        Document pred = doc;
        pred.annotations = predict_document(model, doc, resources);
        write_file(fs::path(pr_out) / (doc.doc_id + ".ann"), render_annotations(pred));
      }
      std::cout << "wrote predictions for " << corpus.size() << " notes to " << pr_out << "\n";
    } else if (eval_cmd->parsed()) {
      auto corpus = load_corpus(ev_corpus);
      std::map<std::string, std::vector<Annotation>> predictions;
      for (const Document& doc : corpus) {
        fs::path ann = fs::path(ev_pred) / (doc.doc_id + ".ann");
        require(fs::exists(ann), "no prediction file for " + doc.doc_id);
        predictions[doc.doc_id] = parse_annotation_file(ann, doc.doc_id);
      }
      MetricReport report = full_report(corpus, predictions);
      std::string tsv = render_report_tsv(report);
      std::cout << tsv;
      if (!ev_out.empty()) {
        write_file(ev_out + ".tsv", tsv);
        write_file(ev_out + ".json", nlohmann::json(report).dump(2) + "\n");
      }
    } else if (redact_cmd->parsed()) {
      DeidModel model = load_checkpoint(rd_model);
      auto corpus = load_corpus(rd_corpus);
      FeatureResources resources =
          load_feature_resources(resource_root(rd_resources), model.schema);
      fs::create_directories(rd_out);
      for (const Document& doc : corpus) {
        auto spans = predict_document(model, doc, resources);
        write_file(fs::path(rd_out) / (doc.doc_id + ".txt"), redact(doc.text, spans));
      }
      std::cout << "wrote de-identified notes for " << corpus.size() << " notes to " << rd_out
                << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
