#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tlsa/classifier.hpp"
#include "tlsa/corpus.hpp"

namespace tlsa {

/// Harmonic mean 2ab/(a+b); 0 when either input is 0.
double h_score(double a_common, double a_private);

/// Three-way harmonic mean; 0 when any input is 0.
double h3_score(double a_common, double a_private, double nmi_value);

/// I(U;V) / ((H(U) + H(V)) / 2) with natural logs. Two single-cluster
/// partitions score 1; otherwise a zero-entropy side scores 0.
/// Throws NoPrivateSamples (empty input), ShapeMismatch.
double nmi(std::span<const int> predicted, std::span<const int> truth);

struct TruthRecord {
  std::string sample_id;
  std::string true_label;
  bool is_private = false;
};

/// JSONL: {sample_id, true_label, is_private}.
std::vector<TruthRecord> load_truth(const std::filesystem::path& path);

enum class CommonAveraging { PerClass, PerInstance };

struct EvalOptions {
  CommonAveraging averaging = CommonAveraging::PerClass;
};

struct EvalResult {
  SplitSetting setting = SplitSetting::OPDA;
  double acc_common = 0.0;
  std::optional<double> acc_private;  // open settings only
  std::optional<double> nmi;          // open settings only
  double h_score = 0.0;
  double h3_score = 0.0;
  std::map<std::string, double> per_class;
};

/// Common accuracy over non-private truth; private accuracy is the share of
/// private samples emitted as unknown; NMI clusters the private samples by
/// their predicted label. For PDA/CDA both scores carry the mean class
/// accuracy. Throws MissingTruth, EmptyEval, NoPrivateSamples.
EvalResult evaluate(std::span<const PredictionRecord> preds, std::span<const TruthRecord> truth,
                    const SplitConfig& split, const EvalOptions& options = {});

std::string to_json(const EvalResult& result);

}  // namespace tlsa
