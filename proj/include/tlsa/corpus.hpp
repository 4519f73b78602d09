#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tlsa {

/// Float32 vectors keyed by unique string IDs, stored row-major.
///
/// Holds both image embeddings and label (text) embeddings. Construction
/// through `add_row` enforces the per-row invariants; the `normalized` flag
/// is only set by `normalize_rows` or by a loader that has verified it.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  bool normalized() const noexcept { return normalized_; }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& id(std::size_t row) const { return ids_.at(row); }
  std::span<const float> row(std::size_t index) const;
  std::span<float> mutable_row(std::size_t index);
  const std::vector<float>& data() const noexcept { return data_; }

  /// Throws DuplicateId, DimensionMismatch or NonFiniteValue. Appending
  /// clears the normalized flag.
  void add_row(std::string id, std::span<const float> values);

  std::optional<std::size_t> find(std::string_view id) const;

  /// Checks the unit-norm invariant (tolerance 1e-4) and sets the flag.
  /// Throws NotNormalized.
  void mark_normalized();

  bool operator==(const EmbeddingTable& other) const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
  bool normalized_ = false;
};

inline constexpr double kUnitNormTolerance = 1e-4;

EmbeddingTable load_embeddings(const std::filesystem::path& path);
EmbeddingTable read_embeddings(std::istream& in);
void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
void write_embeddings(const EmbeddingTable& table, std::ostream& out);

/// Scales every row to unit L2 norm. Throws ZeroNormRow.
EmbeddingTable normalize_rows(const EmbeddingTable& table);

/// Rows of `table` whose (normalized) IDs match `labels`, in label order.
/// Throws MissingEmbedding.
EmbeddingTable select_rows(const EmbeddingTable& table, std::span<const std::string> labels);

enum class LabelKind { Source, Discovered, PrivateCandidate, PrivatePredicted };

/// Ordered set of normalized labels.
class LabelSet {
 public:
  explicit LabelSet(LabelKind kind = LabelKind::Source) : kind_(kind) {}
  LabelSet(LabelKind kind, std::span<const std::string> raw_labels);
  LabelSet(LabelKind kind, std::initializer_list<std::string_view> raw_labels);

  /// Normalizes and appends; returns false if the label was already present
  /// or normalizes to the empty string.
  bool insert(std::string_view raw);
  bool contains(std::string_view label) const;
  std::optional<std::size_t> index_of(std::string_view label) const;

  LabelKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& operator[](std::size_t i) const { return labels_[i]; }
  auto begin() const noexcept { return labels_.begin(); }
  auto end() const noexcept { return labels_.end(); }

 private:
  LabelKind kind_;
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> index_;
};

LabelSet load_label_set(const std::filesystem::path& path, LabelKind kind);
void write_label_set(const LabelSet& labels, const std::filesystem::path& path);

struct VqaResponse {
  int prompt_index = 0;
  std::string answer;
};

struct DiscoveredLabelRecord {
  std::string sample_id;
  std::vector<VqaResponse> responses;
  std::optional<std::string> voted_label;
};

inline constexpr std::size_t kDefaultPromptCount = 5;

/// Captions JSONL: {"sample_id": str, "responses": [{"prompt": int, "answer": str}]}.
/// Throws MalformedRecord (bad JSON, missing fields, too many responses,
/// duplicate sample IDs).
std::vector<DiscoveredLabelRecord> load_captions(const std::filesystem::path& path,
                                                 std::size_t max_prompts = kDefaultPromptCount);
std::vector<DiscoveredLabelRecord> read_captions(std::istream& in,
                                                 std::size_t max_prompts = kDefaultPromptCount);

/// Sees the raw answer with outer whitespace trimmed, so articles count as
/// words.
using RetainFilter = std::function<bool(std::string_view answer)>;

/// Rejects empty answers, answers with more than `max_words` words and
/// answers containing a comma.
RetainFilter default_retain_filter(std::size_t max_words = 4);

/// Plurality label among normalized answers that pass `retain`. Ties go to
/// the label whose first occurrence is earliest.
std::optional<std::string> majority_vote(std::span<const std::string> responses,
                                         const RetainFilter& retain = default_retain_filter());

/// Fills `voted_label` for every record.
void vote_records(std::vector<DiscoveredLabelRecord>& records,
                  const RetainFilter& retain = default_retain_filter());

struct DiscoveredLabels {
  LabelSet labels{LabelKind::Discovered};
  /// sample_id -> r_i; samples without a voted label are absent.
  std::map<std::string, std::string> per_sample;
};

/// Union of voted labels, sorted so the result does not depend on record order.
DiscoveredLabels collect_discovered(std::span<const DiscoveredLabelRecord> records);

/// TSV: sample_id \t label.
void write_sample_labels(const std::map<std::string, std::string>& per_sample,
                         const std::filesystem::path& path);
std::map<std::string, std::string> load_sample_labels(const std::filesystem::path& path);

enum class SplitSetting { OPDA, ODA, PDA, CDA };

std::string_view to_string(SplitSetting setting) noexcept;
SplitSetting parse_split_setting(std::string_view text);

struct SplitConfig {
  int n_source_private = 0;
  int n_shared = 1;
  int n_target_private = 0;
  SplitSetting setting = SplitSetting::OPDA;

  /// Throws InvalidArgument when the counts contradict the setting.
  void validate() const;
  bool has_target_private() const noexcept {
    return setting == SplitSetting::OPDA || setting == SplitSetting::ODA;
  }
};

}  // namespace tlsa
