#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tlsa/corpus.hpp"

namespace tlsa {

inline constexpr double kDefaultTemperature = 0.01;

/// Zero-shot cosine head over source ++ predicted-private labels. Any
/// private argmax collapses to the single unknown class `n_source`.
class UniversalClassifier {
 public:
  UniversalClassifier() = default;

  /// Throws DimensionMismatch, LabelCollision, NotNormalized.
  static UniversalClassifier build(const EmbeddingTable& source_emb,
                                   const EmbeddingTable& private_emb);

  std::size_t n_source() const noexcept { return n_source_; }
  std::size_t size() const noexcept { return weights_.size(); }
  std::size_t dim() const noexcept { return weights_.dim(); }
  std::size_t unknown_class() const noexcept { return n_source_; }
  const std::vector<std::string>& label_order() const noexcept { return weights_.ids(); }
  const EmbeddingTable& weights() const noexcept { return weights_; }

 private:
  EmbeddingTable weights_;
  std::size_t n_source_ = 0;
};

struct Prediction {
  std::size_t class_index = 0;  // in 0..n_source
  std::size_t label_index = 0;  // argmax over the full label order
  std::string label;
  bool is_unknown = false;
  std::vector<double> probs;  // softmax over label_order at the given temperature
};

/// Numerically stable softmax of `logits`.
std::vector<double> softmax(std::span<const double> logits);

/// Raw cosine scores of a unit vector against every classifier row.
std::vector<double> cosine_scores(const UniversalClassifier& clf, std::span<const double> image);

/// Argmax ties go to the smallest index. Throws ShapeMismatch,
/// InvalidArgument (temperature <= 0).
Prediction predict(const UniversalClassifier& clf, std::span<const double> image,
                   double temperature = kDefaultTemperature);
Prediction predict(const UniversalClassifier& clf, std::span<const float> image,
                   double temperature = kDefaultTemperature);

struct PredictionRecord {
  std::string sample_id;
  std::size_t class_index = 0;
  std::string label;
  bool is_unknown = false;
  std::optional<std::vector<double>> probs;
};

PredictionRecord to_record(std::string sample_id, Prediction prediction, bool keep_probs);

std::vector<PredictionRecord> predict_all(const UniversalClassifier& clf,
                                          const EmbeddingTable& images,
                                          double temperature = kDefaultTemperature,
                                          bool keep_probs = false);

/// JSONL: {sample_id, class_index, label, is_unknown, probs?}.
void write_predictions(std::span<const PredictionRecord> records,
                       const std::filesystem::path& path);
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path);

}  // namespace tlsa
