// tlsa: label-space alignment pipeline over precomputed embeddings.
//
//   tlsa run --config pipeline.toml
//   tlsa discover|align|refine|predict|selftrain|evaluate --config pipeline.toml

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tlsa/pipeline.hpp"

namespace {

struct Overrides {
  std::optional<std::size_t> k;
  std::optional<double> epsilon;
  std::optional<std::size_t> batch_size;
  std::optional<std::uint64_t> seed;
  bool audit = false;
};

int exit_code(tlsa::ErrorCode code) {
  switch (code) {
    case tlsa::ErrorCode::ConfigError: return 2;
    case tlsa::ErrorCode::IoError: return 3;
    default: return 4;
  }
}

int report(std::string_view stage, const tlsa::Error& e) {
  nlohmann::ordered_json j;
  j["stage"] = std::string(stage);
  j["error"] = std::string(tlsa::to_string(e.code()));
  j["message"] = e.detail();
  std::cerr << j.dump() << '\n';
  return exit_code(e.code());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free label-space alignment for universal domain adaptation"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;
  std::optional<std::string> adapter;
  std::optional<std::string> predictions;
  std::optional<std::string> output;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "pipeline config file")->required();
    sub->add_option("--k", ov.k, "top-k size for prediction sets");
    sub->add_option("--epsilon", ov.epsilon, "frequency filter scale");
    sub->add_option("--batch-size", ov.batch_size, "alignment batch size");
    sub->add_option("--seed", ov.seed, "self-training seed");
    sub->add_flag("--audit", ov.audit, "write per-sample alignment audit JSONL");
  };

  auto* discover = app.add_subcommand("discover", "majority-vote labels and drop source synonyms");
  auto* align = app.add_subcommand("align", "semantic alignment into a frequency bank");
  auto* refine = app.add_subcommand("refine", "frequency filter: derive private labels");
  auto* predict = app.add_subcommand("predict", "universal-classifier predictions");
  auto* selftrain = app.add_subcommand("selftrain", "train the adapter by self-training");
  auto* evaluate = app.add_subcommand("evaluate", "H-score / H3-score against the truth manifest");
  auto* run = app.add_subcommand("run", "every stage in order");
  for (auto* sub : {discover, align, refine, predict, selftrain, evaluate, run}) add_common(sub);
  predict->add_option("--adapter", adapter, "adapter checkpoint stem (without .emb/.json)");
  predict->add_option("--output", output, "predictions path");
  evaluate->add_option("--predictions", predictions, "predictions JSONL to score");
  evaluate->add_option("--output", output, "metrics JSON path");

  CLI11_PARSE(app, argc, argv);

  std::string_view stage = "config";
  try {
    tlsa::PipelineConfig cfg = tlsa::load_config(config_path);
    if (ov.k) cfg.k = *ov.k;
    if (ov.epsilon) cfg.epsilon = *ov.epsilon;
    if (ov.batch_size) cfg.batch_size = *ov.batch_size;
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.audit) cfg.audit = true;

    tlsa::Pipeline pipeline(std::move(cfg), &std::cerr);
    if (discover->parsed()) {
      stage = "discover";
      pipeline.discover();
    } else if (align->parsed()) {
      stage = "align";
      pipeline.align();
    } else if (refine->parsed()) {
      stage = "refine";
      pipeline.refine();
    } else if (predict->parsed()) {
      stage = "predict";
      std::optional<std::filesystem::path> a;
      std::optional<std::filesystem::path> o;
      if (adapter) a = *adapter;
      if (output) o = *output;
      pipeline.predict(a, o);
    } else if (selftrain->parsed()) {
      stage = "selftrain";
      pipeline.selftrain();
    } else if (evaluate->parsed()) {
      stage = "evaluate";
      std::optional<std::filesystem::path> p;
      std::optional<std::filesystem::path> o;
      if (predictions) p = *predictions;
      if (output) o = *output;
      std::cout << tlsa::to_json(pipeline.evaluate(p, o)) << '\n';
    } else if (run->parsed()) {
      stage = "run";
      std::cout << tlsa::to_json(pipeline.run()) << '\n';
    }
  } catch (const tlsa::StageError& e) {
    return report(tlsa::to_string(e.stage()), e);
  } catch (const tlsa::Error& e) {
    return report(stage, e);
  }
  return 0;
}
