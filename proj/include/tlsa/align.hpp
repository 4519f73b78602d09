#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tlsa/corpus.hpp"

namespace tlsa {

/// Cosine scores of images against the augmented label space. Source labels
/// occupy the first `n_source` columns, filtered discovered labels the rest.
struct SimilarityMatrix {
  std::vector<std::string> sample_ids;
  std::vector<std::string> label_order;
  std::size_t n_source = 0;
  std::vector<double> scores;  // row-major, sample_ids.size() x label_order.size()

  std::size_t rows() const noexcept { return sample_ids.size(); }
  std::size_t cols() const noexcept { return label_order.size(); }
  std::span<const double> row(std::size_t i) const { return {scores.data() + i * cols(), cols()}; }
};

/// Scores a contiguous slice [first, first+count) of `images`. Both tables
/// must be unit-normalized with the same dim. Dot products accumulate in
/// double in index order. Throws DimensionMismatch, NotNormalized.
SimilarityMatrix score(const EmbeddingTable& images, const EmbeddingTable& labels,
                       std::size_t n_source, std::size_t first = 0,
                       std::optional<std::size_t> count = std::nullopt);

/// Gaps that differ by less than this are treated as tied.
inline constexpr double kGapTieTolerance = 1e-12;

struct GapThreshold {
  std::size_t index = 0;  // J, position of the score right after the largest gap
  double tau_gap = 0.0;
};

/// Largest drop between consecutive ranks of a non-increasing score list;
/// the smallest J wins ties. Throws TooFewScores, InvalidArgument.
GapThreshold gap_threshold(std::span<const double> topk_scores);

/// Arithmetic mean. Throws TooFewScores on an empty list.
double avg_threshold(std::span<const double> topk_scores);

/// Which threshold bounds the prediction set. Only `Min` is used by the
/// pipeline; the single-threshold rules exist for ablation comparisons.
enum class ThresholdRule { Min, GapOnly, AvgOnly };

struct PredictionEntry {
  std::size_t column = 0;
  std::string label;
  double score = 0.0;
};

struct PredictionSet {
  std::string sample_id;
  std::vector<PredictionEntry> entries;  // strictly above tau_set, descending
  std::vector<PredictionEntry> topk;     // the full top-k, for audit
  double tau_gap = 0.0;
  double tau_avg = 0.0;
  double tau_set = 0.0;
};

/// Top-k by score (ties by column), keep entries scoring strictly above
/// tau_set. If nothing survives (all k scores equal) the top-1 entry alone
/// forms the set. `k` is clamped to the row length.
PredictionSet build_prediction_set(std::span<const double> row,
                                   std::span<const std::string> label_order, std::size_t k,
                                   ThresholdRule rule = ThresholdRule::Min,
                                   std::string sample_id = {});

struct Shared {
  std::string label;  // highest-scoring source label in the set
  bool operator==(const Shared&) const = default;
};
struct Private {
  std::string label;  // r_i
  bool operator==(const Private&) const = default;
};
/// A private-looking sample without a voted label; nothing is banked.
struct Skipped {
  bool operator==(const Skipped&) const = default;
};
using Verdict = std::variant<Shared, Private, Skipped>;

std::optional<std::string> banked_label(const Verdict& verdict);

/// Shared if any set entry is a source label, otherwise Private carrying the
/// discovered label r_i (banked even when r_i is not in the set).
Verdict classify_sample(const PredictionSet& pred_set, const LabelSet& source,
                        const std::optional<std::string>& discovered_label);

/// Label -> count, accumulated during alignment.
class FrequencyBank {
 public:
  void add(const std::string& label, std::uint64_t n = 1);
  void merge(const FrequencyBank& other);

  std::uint64_t count(const std::string& label) const;
  std::uint64_t total() const noexcept { return total_; }
  std::uint64_t max_count() const noexcept;
  bool empty() const noexcept { return counts_.empty(); }
  std::size_t size() const noexcept { return counts_.size(); }
  const std::map<std::string, std::uint64_t>& counts() const noexcept { return counts_; }

  bool operator==(const FrequencyBank&) const = default;

 private:
  std::map<std::string, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// TSV: label \t count, sorted by label.
void write_bank(const FrequencyBank& bank, const std::filesystem::path& path);
FrequencyBank load_bank(const std::filesystem::path& path);

struct SampleAlignment {
  PredictionSet pred_set;
  Verdict verdict;
};

struct AlignOptions {
  std::size_t k = 5;
  std::size_t batch_size = 128;
  ThresholdRule rule = ThresholdRule::Min;
  /// Called once per sample in image order; used for audit logs.
  std::function<void(const SampleAlignment&)> on_sample;
  /// Called for private-looking samples without a discovered label.
  std::function<void(const std::string& sample_id)> on_skip;
};

struct AlignmentResult {
  FrequencyBank bank;
  std::vector<Verdict> verdicts;  // one per image row
};

/// One pass over the target images. `labels` holds the embeddings of
/// source ++ filtered discovered labels, in that order, keyed by label.
/// `discovered` maps sample_id -> r_i.
AlignmentResult run_alignment(const EmbeddingTable& images, const EmbeddingTable& labels,
                              const LabelSet& source,
                              const std::map<std::string, std::string>& discovered,
                              const AlignOptions& options = {});

/// JSON object for one audited sample.
std::string audit_line(const SampleAlignment& sample);

}  // namespace tlsa
