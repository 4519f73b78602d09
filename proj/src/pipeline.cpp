#include "tlsa/pipeline.hpp"

#include <fstream>
#include <ostream>
#include <vector>

#include "tlsa/align.hpp"
#include "tlsa/classifier.hpp"
#include "tlsa/corpus.hpp"
#include "tlsa/lexicon.hpp"
#include "tlsa/selftrain.hpp"

namespace tlsa {

std::string_view to_string(Stage stage) noexcept {
  switch (stage) {
    case Stage::Config: return "config";
    case Stage::Discover: return "discover";
    case Stage::Align: return "align";
    case Stage::Refine: return "refine";
    case Stage::Predict: return "predict";
    case Stage::SelfTrain: return "selftrain";
    case Stage::Evaluate: return "evaluate";
  }
  return "config";
}

namespace {

EmbeddingTable unit_rows(EmbeddingTable table) {
  return table.normalized() ? table : normalize_rows(table);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text << '\n';
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config, std::ostream* log)
    : config_(std::move(config)), log_(log) {
  try {
    config_.validate();
  } catch (const Error& e) {
    throw StageError(Stage::Config, e);
  }
}

template <typename F>
auto Pipeline::in_stage(Stage stage, F&& body) {
  try {
    std::filesystem::create_directories(config_.paths.output_dir);
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  } catch (const std::filesystem::filesystem_error& e) {
    throw StageError(stage, Error(ErrorCode::IoError, e.what()));
  }
}

std::filesystem::path Pipeline::artifact(std::string_view name) const {
  return config_.paths.output_dir / std::string(name);
}

void Pipeline::check_inputs(Stage stage) const {
  auto need = [](const std::filesystem::path& p, const char* key) {
    if (p.empty()) {
      throw StageError(Stage::Config, Error(ErrorCode::ConfigError, std::string(key) + " is not set"));
    }
    if (!std::filesystem::exists(p)) {
      throw StageError(Stage::Config,
                       Error(ErrorCode::ConfigError, std::string(key) + " not found: " + p.string()));
    }
  };
  const auto& p = config_.paths;
  switch (stage) {
    case Stage::Config:
      break;
    case Stage::Discover:
      need(p.captions, "captions");
      need(p.synonyms, "synonyms");
      need(p.source_labels, "source_labels");
      break;
    case Stage::Align:
      need(p.images, "images");
      need(p.label_embeddings, "label_embeddings");
      need(p.source_labels, "source_labels");
      break;
    case Stage::Refine:
      need(p.synonyms, "synonyms");
      need(p.source_labels, "source_labels");
      break;
    case Stage::Predict:
    case Stage::SelfTrain:
      need(p.images, "images");
      need(p.label_embeddings, "label_embeddings");
      need(p.source_labels, "source_labels");
      break;
    case Stage::Evaluate:
      need(p.truth, "truth");
      break;
  }
}

void Pipeline::discover() {
  check_inputs(Stage::Discover);
  in_stage(Stage::Discover, [&] {
    auto records = load_captions(config_.paths.captions, config_.max_prompts);
    vote_records(records, default_retain_filter(config_.max_answer_words));
    const DiscoveredLabels discovered = collect_discovered(records);
    const LabelSet source = load_label_set(config_.paths.source_labels, LabelKind::Source);
    const SynonymDb db = parse_synonym_db(config_.paths.synonyms);
    const SynonymAlignment aligned = synonym_align(db, discovered.labels, source);

    write_label_set(discovered.labels, artifact(artifacts::kDiscovered));
    write_sample_labels(discovered.per_sample, artifact(artifacts::kSampleLabels));
    write_label_set(aligned.kept, artifact(artifacts::kFiltered));
    std::ofstream rewrites(artifact(artifacts::kSynonymRewrites), std::ios::trunc);
    for (const auto& [removed, matched] : aligned.rewrites) {
      rewrites << removed << '\t' << matched << '\n';
    }
    if (log_) {
      *log_ << "discover: " << records.size() << " samples, " << discovered.labels.size()
            << " discovered labels, " << aligned.rewrites.size() << " removed as source synonyms\n";
    }
  });
}

void Pipeline::align() {
  check_inputs(Stage::Align);
  in_stage(Stage::Align, [&] {
    const LabelSet source = load_label_set(config_.paths.source_labels, LabelKind::Source);
    const LabelSet filtered = load_label_set(artifact(artifacts::kFiltered), LabelKind::PrivateCandidate);
    std::vector<std::string> order = source.labels();
    for (const std::string& l : filtered) {
      if (!source.contains(l)) order.push_back(l);
    }
    const EmbeddingTable images = unit_rows(load_embeddings(config_.paths.images));
    const EmbeddingTable labels =
        unit_rows(select_rows(load_embeddings(config_.paths.label_embeddings), order));
    const auto per_sample = load_sample_labels(artifact(artifacts::kSampleLabels));

    std::ofstream audit;
    if (config_.audit) {
      audit.open(artifact(artifacts::kAlignAudit), std::ios::trunc);
      if (!audit) throw Error(ErrorCode::IoError, "cannot write alignment audit");
    }
    std::size_t skipped = 0;
    AlignOptions options;
    options.k = config_.k;
    options.batch_size = config_.batch_size;
    options.on_skip = [&](const std::string& id) {
      ++skipped;
      if (log_) *log_ << "warning: " << id << " looks target-private but has no discovered label\n";
    };
    if (config_.audit) {
      options.on_sample = [&](const SampleAlignment& s) { audit << audit_line(s) << '\n'; };
    }
    const AlignmentResult result = run_alignment(images, labels, source, per_sample, options);
    write_bank(result.bank, artifact(artifacts::kBank));
    if (log_) {
      *log_ << "align: " << images.size() << " samples, " << result.bank.total() << " banked, "
            << skipped << " skipped\n";
    }
  });
}

RefineResult Pipeline::refine() {
  check_inputs(Stage::Refine);
  return in_stage(Stage::Refine, [&] {
    const LabelSet source = load_label_set(config_.paths.source_labels, LabelKind::Source);
    const SynonymDb db = parse_synonym_db(config_.paths.synonyms);
    const FrequencyBank bank = load_bank(artifact(artifacts::kBank));
    RefineResult result = frequency_filter(bank, source, RefineConfig{config_.epsilon}, &db);
    write_label_set(result.private_labels, artifact(artifacts::kPrivateLabels));
    write_report(report_candidates(result), artifact(artifacts::kCandidates));
    if (log_) {
      *log_ << "refine: tau_freq=" << result.tau_freq << ", " << result.private_labels.size()
            << " private labels\n";
    }
    return result;
  });
}

namespace {

UniversalClassifier load_classifier(const PipelineConfig& cfg, const std::filesystem::path& private_path) {
  const LabelSet source = load_label_set(cfg.paths.source_labels, LabelKind::Source);
  const LabelSet priv = load_label_set(private_path, LabelKind::PrivatePredicted);
  const EmbeddingTable all = load_embeddings(cfg.paths.label_embeddings);
  const EmbeddingTable source_emb = unit_rows(select_rows(all, source.labels()));
  EmbeddingTable private_emb(all.dim());
  if (!priv.empty()) private_emb = unit_rows(select_rows(all, priv.labels()));
  return UniversalClassifier::build(source_emb, private_emb);
}

}  // namespace

void Pipeline::predict(const std::optional<std::filesystem::path>& adapter_stem,
                       const std::optional<std::filesystem::path>& output) {
  check_inputs(Stage::Predict);
  in_stage(Stage::Predict, [&] {
    const UniversalClassifier clf = load_classifier(config_, artifact(artifacts::kPrivateLabels));
    const EmbeddingTable images = unit_rows(load_embeddings(config_.paths.images));
    std::vector<PredictionRecord> preds;
    if (adapter_stem) {
      const Checkpoint ckpt = load_checkpoint(*adapter_stem);
      preds = predict_adapted(ckpt.student, clf, images, config_.temperature, config_.write_probs);
    } else {
      preds = predict_all(clf, images, config_.temperature, config_.write_probs);
    }
    write_predictions(preds, output.value_or(artifact(artifacts::kPredictions)));
  });
}

void Pipeline::selftrain() {
  check_inputs(Stage::SelfTrain);
  in_stage(Stage::SelfTrain, [&] {
    TrainConfig cfg = config_.selftrain.value_or(TrainConfig{});
    cfg.seed = config_.seed;
    cfg.temperature = config_.temperature;
    const UniversalClassifier clf = load_classifier(config_, artifact(artifacts::kPrivateLabels));
    const EmbeddingTable images = unit_rows(load_embeddings(config_.paths.images));
    const TrainResult result = train(images, clf, cfg);
    save_checkpoint(artifact(artifacts::kAdapter), result, cfg);
    write_history(result.history, artifact(artifacts::kHistory));
    // Predict from the stored (float32) parameters so `predict --adapter`
    // reproduces this file.
    const Checkpoint ckpt = load_checkpoint(artifact(artifacts::kAdapter));
    write_predictions(
        predict_adapted(ckpt.student, clf, images, config_.temperature, config_.write_probs),
        artifact(artifacts::kSelfTrainPredictions));
    if (log_) {
      *log_ << "selftrain: " << result.history.size() << " iterations, "
            << result.teacher_updates << " teacher updates\n";
    }
  });
}

EvalResult Pipeline::evaluate(const std::optional<std::filesystem::path>& predictions,
                              const std::optional<std::filesystem::path>& output) {
  check_inputs(Stage::Evaluate);
  return in_stage(Stage::Evaluate, [&] {
    const auto preds = load_predictions(predictions.value_or(artifact(artifacts::kPredictions)));
    const auto truth = load_truth(config_.paths.truth);
    EvalResult result = tlsa::evaluate(preds, truth, config_.split);
    write_text(output.value_or(artifact(artifacts::kMetrics)), to_json(result));
    return result;
  });
}

EvalResult Pipeline::run() {
  for (Stage s : {Stage::Discover, Stage::Align, Stage::Refine, Stage::Predict, Stage::Evaluate}) {
    check_inputs(s);
  }
  discover();
  align();
  refine();
  predict();
  EvalResult result = evaluate();
  if (config_.selftrain) {
    selftrain();
    result = evaluate(artifact(artifacts::kSelfTrainPredictions), artifact(artifacts::kSelfTrainMetrics));
  }
  return result;
}

}  // namespace tlsa
