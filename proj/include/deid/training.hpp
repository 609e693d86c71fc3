#pragma once

#include <optional>
#include <string>
#include <vector>

#include "deid/evaluation.hpp"
#include "deid/tagger.hpp"

namespace deid {

struct EpochRecord {
  size_t epoch = 0;  // 1-based
  MetricReport validation;
  std::string checkpoint_path;
  double mean_train_nll = 0;
};

enum class SelectionCriterion { F1, Recall };

inline const char* criterion_name(SelectionCriterion c) {
  return c == SelectionCriterion::F1 ? "f1" : "recall";
}

inline SelectionCriterion parse_criterion(std::string_view s) {
  if (s == "f1") return SelectionCriterion::F1;
  if (s == "recall") return SelectionCriterion::Recall;
  throw Error("unknown selection criterion: \"" + std::string(s) + "\" (expected f1 or recall)");
}

/// The selection metric: the chosen statistic of the validation
/// binary-HIPAA row.
inline double selection_metric(const MetricReport& report, SelectionCriterion c) {
  const auto& row = report.binary_hipaa();
  return c == SelectionCriterion::F1 ? row.f1 : row.recall;
}

/// argmax of the criterion metric over validation records; earliest epoch
/// wins ties.
inline const EpochRecord& select_epoch(std::span<const EpochRecord> records,
                                       SelectionCriterion criterion) {
  require(!records.empty(), "select_epoch: no records");
  const EpochRecord* best = &records[0];
  for (const EpochRecord& r : records)
    if (selection_metric(r.validation, criterion) > selection_metric(best->validation, criterion))
      best = &r;
  return *best;
}

/// A document tokenized, segmented, gold-projected and featurized once.
struct PreparedDoc {
  const Document* doc = nullptr;
  std::vector<Sequence> sequences;
  std::vector<std::vector<TokenLabel>> gold_labels;
  std::vector<std::vector<int>> gold_ids;
  std::vector<std::vector<FeatureVector>> features;
};

inline std::vector<PreparedDoc> prepare_documents(std::span<const Document* const> docs,
                                                  const FeatureSchema& schema,
                                                  const FeatureResources& resources,
                                                  const LabelSet& labels, size_t max_len) {
  std::vector<PreparedDoc> out;
  out.reserve(docs.size());
  for (const Document* doc : docs) {
    PreparedDoc p;
    p.doc = doc;
    auto tokens = tokenize(doc->text);
    p.sequences = segment(tokens, doc->text, max_len, doc->doc_id);
    for (const Sequence& seq : p.sequences) {
      auto gold = project_labels(seq, doc->annotations);
      std::vector<int> ids(gold.size());
      for (size_t i = 0; i < gold.size(); ++i) ids[i] = labels.id(gold[i]);
      p.gold_labels.push_back(std::move(gold));
      p.gold_ids.push_back(std::move(ids));
      p.features.push_back(extract_all(seq, doc->metadata, schema, resources));
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<std::vector<TokenLabel>> predict_prepared(const DeidModel& model,
                                                             std::span<const PreparedDoc> docs) {
  std::vector<std::vector<TokenLabel>> out;
  for (const PreparedDoc& d : docs)
    for (size_t s = 0; s < d.sequences.size(); ++s)
      out.push_back(model.predict_sequence(d.sequences[s], d.features[s]).labels);
  return out;
}

inline MetricReport evaluate_prepared(const DeidModel& model, std::span<const PreparedDoc> docs) {
  std::vector<std::vector<TokenLabel>> gold;
  for (const PreparedDoc& d : docs)
    for (const auto& g : d.gold_labels) gold.push_back(g);
  auto pred = predict_prepared(model, docs);
  return report_from_labels(gold, pred);
}

/// Token set of the pre-trained vector file (first field per line).
inline std::set<std::string> read_pretrained_vocab(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open pre-trained embeddings: " + path.string());
  std::set<std::string> vocab;
  std::string line;
  while (std::getline(in, line)) {
    size_t sp = line.find(' ');
    if (sp != std::string::npos && sp > 0) vocab.insert(casefold(std::string_view(line).substr(0, sp)));
  }
  return vocab;
}

/// Everything shared between runs that differ only by seed.
struct TrainingData {
  FeatureSchema schema;
  LabelSet labels;
  std::vector<PreparedDoc> train, validation, test;
  CharVocab char_vocab;
  TokenVocab token_vocab;

  static TrainingData build(const std::vector<Document>& corpus, const DatasetSplit& split,
                            const FeatureSchema& schema, const FeatureResources& resources,
                            size_t max_sequence_length,
                            const std::optional<fs::path>& pretrained = std::nullopt) {
    require(!split.train.empty(), "train split is empty");
    require(!split.validation.empty(), "validation split is empty");
    TrainingData d;
    d.schema = schema;
    auto train_docs = select_documents(corpus, split.train);
    auto val_docs = select_documents(corpus, split.validation);
    auto test_docs = select_documents(corpus, split.test);
    d.train = prepare_documents(train_docs, schema, resources, d.labels, max_sequence_length);
    d.validation = prepare_documents(val_docs, schema, resources, d.labels, max_sequence_length);
    d.test = prepare_documents(test_docs, schema, resources, d.labels, max_sequence_length);

    // Token vocabulary: training-split tokens, plus corpus tokens that the
    // pre-trained file covers (those rows get real vectors instead of UNK).
    std::set<std::string> train_tokens;
    std::vector<std::string> train_surfaces;
    for (const PreparedDoc& p : d.train)
      for (const Sequence& s : p.sequences)
        for (const Token& t : s.tokens) {
          train_tokens.insert(casefold(t.surface));
          train_surfaces.push_back(t.surface);
        }
    if (pretrained) {
      std::set<std::string> pre = read_pretrained_vocab(*pretrained);
      for (const Document& doc : corpus)
        for (const Token& t : tokenize(doc.text)) {
          std::string cf = casefold(t.surface);
          if (pre.count(cf)) train_tokens.insert(cf);
        }
    }
    d.token_vocab = TokenVocab::from_tokens(train_tokens);
    d.char_vocab = CharVocab::from_strings(train_surfaces);
    return d;
  }
};

/// One training run: per epoch, a seeded shuffle of the training sequences,
/// one SGD step per sequence on the CRF NLL with dropout active, then a
/// validation pass and a checkpoint. Stops at max_epochs or after `patience`
/// epochs without improvement in the selection metric.
inline std::vector<EpochRecord> train_run(const TrainingData& data, const Config& config,
                                          SelectionCriterion criterion, const fs::path& run_dir,
                                          const std::optional<fs::path>& pretrained = std::nullopt) {
  config.validate();
  fs::create_directories(run_dir);
  DeidModel model = DeidModel::init(config, data.schema, data.char_vocab, data.token_vocab,
                                    pretrained);
  auto params = model.params();
  SgdConfig sgd{config.learning_rate, config.clip_norm, config.dropout_p};

  struct SeqRef {
    const PreparedDoc* doc;
    size_t seq;
  };
  std::vector<SeqRef> order;
  for (const PreparedDoc& p : data.train)
    for (size_t s = 0; s < p.sequences.size(); ++s) order.push_back({&p, s});
  require(!order.empty(), "train: no training sequences");

  Rng train_rng(config.seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
  std::vector<EpochRecord> records;
  std::string log;
  double best_metric = -1;
  size_t best_epoch = 0;
  Tape tape;
  for (size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    train_rng.shuffle(order);
    double nll_sum = 0;
    for (const SeqRef& ref : order) {
      tape.reset();
      NodeId loss = model.sequence_nll(tape, ref.doc->sequences[ref.seq],
                                       ref.doc->features[ref.seq], ref.doc->gold_ids[ref.seq],
                                       train_rng, true);
      double nll = tape.value(loss)[0];
      require(std::isfinite(nll), "non-finite loss at epoch " + std::to_string(epoch) +
                                      ", document " + ref.doc->doc->doc_id + ", sequence " +
                                      std::to_string(ref.seq));
      nll_sum += nll;
      tape.backward(loss);
      sgd_step(params, sgd);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_train_nll = nll_sum / static_cast<double>(order.size());
    rec.validation = evaluate_prepared(model, data.validation);
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03zu.ckpt", epoch);
    rec.checkpoint_path = (run_dir / name).string();
    save_checkpoint(model, rec.checkpoint_path);

    const auto& bh = rec.validation.binary_hipaa();
    log += std::to_string(epoch) + "\t" + format_pct(bh.precision) + "\t" +
           format_pct(bh.recall) + "\t" + format_pct(bh.f1) + "\t" + rec.checkpoint_path + "\n";
    write_file(run_dir / "train.log", log);

    double metric = selection_metric(rec.validation, criterion);
    records.push_back(std::move(rec));
    if (metric > best_metric) {
      best_metric = metric;
      best_epoch = epoch;
    } else if (epoch - best_epoch >= config.patience) {
      break;
    }
  }
  return records;
}

/// Spec-shaped entry point building everything from a raw corpus and split.
inline std::vector<EpochRecord> train(const std::vector<Document>& corpus,
                                      const DatasetSplit& split, const FeatureSchema& schema,
                                      const FeatureResources& resources, const Config& config,
                                      SelectionCriterion criterion, const fs::path& run_dir,
                                      const std::optional<fs::path>& pretrained = std::nullopt) {
  TrainingData data = TrainingData::build(corpus, split, schema, resources,
                                          config.max_sequence_length, pretrained);
  return train_run(data, config, criterion, run_dir, pretrained);
}

struct RunResult {
  uint64_t seed = 0;
  std::vector<EpochRecord> records;
  size_t epoch_by_f1 = 0;
  size_t epoch_by_recall = 0;
  size_t active_epoch = 0;
  MetricReport test_report;
};

struct ExperimentResult {
  std::vector<RunResult> runs;
  MetricReport mean_test;
};

inline nlohmann::json experiment_manifest(const ExperimentResult& result, const Config& base,
                                          const TrainingData& data,
                                          SelectionCriterion criterion) {
  nlohmann::json j;
  j["config"] = base;
  j["criterion"] = criterion_name(criterion);
  j["schema_size"] = data.schema.size();
  char hash_hex[17];
  std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                static_cast<unsigned long long>(data.schema.hash()));
  j["schema_hash"] = hash_hex;
  j["split_sizes"] = {{"train", data.train.size()},
                      {"validation", data.validation.size()},
                      {"test", data.test.size()}};
  nlohmann::json runs = nlohmann::json::array();
  for (const RunResult& r : result.runs) {
    nlohmann::json run;
    run["seed"] = r.seed;
    run["epochs_trained"] = r.records.size();
    auto selected = [&](size_t epoch) {
      const EpochRecord& rec = r.records[epoch - 1];
      const auto& bh = rec.validation.binary_hipaa();
      return nlohmann::json{{"epoch", epoch},
                            {"val_precision", bh.precision},
                            {"val_recall", bh.recall},
                            {"val_f1", bh.f1}};
    };
    run["selected_by_f1"] = selected(r.epoch_by_f1);
    run["selected_by_recall"] = selected(r.epoch_by_recall);
    run["active_epoch"] = r.active_epoch;
    run["test"] = r.test_report;
    runs.push_back(std::move(run));
  }
  j["runs"] = runs;
  j["mean_test"] = result.mean_test;
  return j;
}

/// Trains one model per seed, selects each run's epoch by the criterion,
/// evaluates the reloaded checkpoint on the test split, and reports per-run
/// plus mean metrics. Writes manifest.json under out_dir.
inline ExperimentResult run_experiment(const TrainingData& data, const Config& base_config,
                                       std::span<const uint64_t> seeds,
                                       SelectionCriterion criterion, const fs::path& out_dir,
                                       const std::optional<fs::path>& pretrained = std::nullopt) {
  require(!seeds.empty(), "run_experiment: need at least one seed");
  for (size_t i = 0; i < seeds.size(); ++i)
    for (size_t j = i + 1; j < seeds.size(); ++j)
      require(seeds[i] != seeds[j], "run_experiment: duplicate seed " + std::to_string(seeds[i]));

  ExperimentResult result;
  std::vector<MetricReport> test_reports;
  for (uint64_t seed : seeds) {
    Config cfg = base_config;
    cfg.seed = seed;
    fs::path run_dir = out_dir / ("seed_" + std::to_string(seed));
    RunResult run;
    run.seed = seed;
    run.records = train_run(data, cfg, criterion, run_dir, pretrained);
    run.epoch_by_f1 = select_epoch(run.records, SelectionCriterion::F1).epoch;
    run.epoch_by_recall = select_epoch(run.records, SelectionCriterion::Recall).epoch;
    run.active_epoch = select_epoch(run.records, criterion).epoch;
    DeidModel selected = load_checkpoint(run.records[run.active_epoch - 1].checkpoint_path);
    run.test_report = evaluate_prepared(selected, data.test);
    test_reports.push_back(run.test_report);
    result.runs.push_back(std::move(run));
  }
  result.mean_test = aggregate(test_reports);
  nlohmann::json manifest = experiment_manifest(result, base_config, data, criterion);
  fs::create_directories(out_dir);
  write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

}  // namespace deid
