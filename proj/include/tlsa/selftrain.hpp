#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tlsa/classifier.hpp"
#include "tlsa/corpus.hpp"

namespace tlsa {

/// Residual bottleneck adapter on a frozen embedding:
///   z = normalize(x + scale * up^T relu(down^T x))
/// with down: d x r and up: r x d.
struct AdapterParams {
  Eigen::MatrixXd down;
  Eigen::MatrixXd up;
  double scale = 1.0;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(down.rows()); }
  std::size_t bottleneck() const noexcept { return static_cast<std::size_t>(down.cols()); }

  static AdapterParams zeros(std::size_t dim, std::size_t bottleneck);
  /// down ~ U(-1/sqrt(d), 1/sqrt(d)), up = 0: starts exactly at zero-shot.
  static AdapterParams initial(std::size_t dim, std::size_t bottleneck, std::uint64_t seed,
                               double scale = 1.0);

  bool all_finite() const;
  bool same_shape(const AdapterParams& other) const noexcept;
  bool operator==(const AdapterParams& other) const;
};

inline constexpr std::size_t kNeverUpdateTeacher = std::numeric_limits<std::size_t>::max();

struct TrainConfig {
  std::size_t batch_size = 64;
  double lr = 0.01;
  double momentum = 0.0;
  std::size_t iterations = 2500;
  double ema_alpha = 0.999;
  /// Iterations between teacher EMA updates; 0 means one epoch
  /// (ceil(n_samples / batch_size)), kNeverUpdateTeacher disables updates.
  std::size_t teacher_update_period = 0;
  std::size_t bottleneck = 64;
  double temperature = kDefaultTemperature;
  double init_scale = 1.0;
  bool train_scale = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Frozen double-precision copy of the classifier weights (labels x dim).
class FrozenHead {
 public:
  explicit FrozenHead(const UniversalClassifier& clf);
  const Eigen::MatrixXd& weights() const noexcept { return weights_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(weights_.cols()); }
  std::size_t labels() const noexcept { return static_cast<std::size_t>(weights_.rows()); }

 private:
  Eigen::MatrixXd weights_;
};

/// Adapted, re-normalized embedding. Throws ShapeMismatch, ZeroNormRow.
Eigen::VectorXd apply_adapter(const AdapterParams& adapter, const Eigen::VectorXd& x);

/// Softmax over the classifier's label order for the adapted image.
Eigen::VectorXd student_forward(const AdapterParams& adapter, const FrozenHead& head,
                                const Eigen::VectorXd& image, double temperature);
std::vector<double> student_forward(const AdapterParams& adapter, const UniversalClassifier& clf,
                                    std::span<const float> image, double temperature);

struct LossAndGrad {
  double loss = 0.0;
  AdapterParams grad;
};

enum class Reduction { Mean, Sum };

/// Soft cross-entropy -sum_i q_i . log p_i over the batch, with analytic
/// gradients through softmax, cosine head, re-normalization and adapter
/// (scale included). Throws ShapeMismatch.
LossAndGrad loss_and_grad(const AdapterParams& adapter, const FrozenHead& head,
                          std::span<const Eigen::VectorXd> images,
                          std::span<const Eigen::VectorXd> teacher_targets, double temperature,
                          Reduction reduction = Reduction::Mean);

/// teacher' = (1 - alpha) * student + alpha * teacher, elementwise.
AdapterParams ema_update(const AdapterParams& teacher, const AdapterParams& student, double alpha);

struct TeacherPrediction {
  std::string sample_id;
  std::size_t class_index = 0;
  double confidence = 0.0;
};

struct PseudoLabelSet {
  std::vector<TeacherPrediction> entries;  // grouped by class ascending, confidence descending
};

/// Keeps, per predicted class, the floor(min(n_c_i, N / n_c)) most confident
/// predictions (ties by sample_id). Throws InvalidArgument for a confidence
/// outside [0, 1].
PseudoLabelSet select_pseudo_labels(std::span<const TeacherPrediction> teacher_preds,
                                    std::size_t batch_size);

struct TrainStep {
  std::size_t iteration = 0;
  double loss = 0.0;
  std::size_t n_pseudo = 0;
};

struct TrainResult {
  AdapterParams student;
  AdapterParams teacher;
  std::vector<TrainStep> history;
  std::size_t teacher_updates = 0;
};

struct TrainHooks {
  std::function<void(const AdapterParams& teacher_before, const AdapterParams& student,
                     const AdapterParams& teacher_after)>
      on_teacher_update;
  std::function<void(std::size_t iteration, const PseudoLabelSet&)> on_pseudo_labels;
};

/// Teacher pseudo-labels a sampled batch, the balanced subset drives one
/// SGD step of the student, and the teacher follows by EMA once per
/// `teacher_update_period`. Classifier weights are never modified.
TrainResult train(const EmbeddingTable& target_images, const UniversalClassifier& clf,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

std::vector<PredictionRecord> predict_adapted(const AdapterParams& adapter,
                                              const UniversalClassifier& clf,
                                              const EmbeddingTable& images,
                                              double temperature = kDefaultTemperature,
                                              bool keep_probs = false);

/// Adapter matrices go into an EMB1 container (`<stem>.emb`); shapes, scales
/// and the training config into a JSON sidecar (`<stem>.json`). Matrices are
/// stored as float32.
void save_checkpoint(const std::filesystem::path& stem, const TrainResult& result,
                     const TrainConfig& cfg);

struct Checkpoint {
  AdapterParams student;
  AdapterParams teacher;
};
Checkpoint load_checkpoint(const std::filesystem::path& stem);

/// Rounds every parameter to float32, matching a save/load round trip.
AdapterParams round_to_float(const AdapterParams& params);

/// CSV: iteration,loss,n_pseudo.
void write_history(std::span<const TrainStep> history, const std::filesystem::path& path);

}  // namespace tlsa
