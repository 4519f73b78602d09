#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "tlsa/config.hpp"
#include "tlsa/error.hpp"
#include "tlsa/metrics.hpp"
#include "tlsa/refine.hpp"

namespace tlsa {

enum class Stage { Config, Discover, Align, Refine, Predict, SelfTrain, Evaluate };

std::string_view to_string(Stage stage) noexcept;

/// An Error tagged with the stage that raised it.
class StageError : public Error {
 public:
  StageError(Stage stage, const Error& cause)
      : Error(cause.code(), cause.detail()), stage_(stage) {}
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

/// File names written under the output directory.
namespace artifacts {
inline constexpr std::string_view kDiscovered = "discovered.txt";
inline constexpr std::string_view kSampleLabels = "discovered_labels.tsv";
inline constexpr std::string_view kFiltered = "filtered.txt";
inline constexpr std::string_view kSynonymRewrites = "synonym_rewrites.tsv";
inline constexpr std::string_view kBank = "bank.tsv";
inline constexpr std::string_view kAlignAudit = "alignment_audit.jsonl";
inline constexpr std::string_view kPrivateLabels = "private_labels.txt";
inline constexpr std::string_view kCandidates = "candidates.tsv";
inline constexpr std::string_view kPredictions = "predictions.jsonl";
inline constexpr std::string_view kMetrics = "metrics.json";
inline constexpr std::string_view kAdapter = "adapter";
inline constexpr std::string_view kHistory = "history.csv";
inline constexpr std::string_view kSelfTrainPredictions = "predictions_selftrain.jsonl";
inline constexpr std::string_view kSelfTrainMetrics = "metrics_selftrain.json";
}  // namespace artifacts

/// Runs the pipeline stages against one configuration. Every stage reads its
/// inputs from configured paths or from artifacts of earlier stages, so the
/// stages compose into the same result as `run`.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config, std::ostream* log = nullptr);

  const PipelineConfig& config() const noexcept { return config_; }
  std::filesystem::path artifact(std::string_view name) const;

  /// Throws StageError(Config) when a path needed by `stage` is unset or
  /// missing. `run` checks every stage up front.
  void check_inputs(Stage stage) const;

  void discover();
  void align();
  RefineResult refine();
  void predict(const std::optional<std::filesystem::path>& adapter_stem = std::nullopt,
               const std::optional<std::filesystem::path>& output = std::nullopt);
  void selftrain();
  EvalResult evaluate(const std::optional<std::filesystem::path>& predictions = std::nullopt,
                      const std::optional<std::filesystem::path>& output = std::nullopt);
  EvalResult run();

 private:
  template <typename F>
  auto in_stage(Stage stage, F&& body);

  PipelineConfig config_;
  std::ostream* log_;
};

}  // namespace tlsa
