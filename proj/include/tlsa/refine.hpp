#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tlsa/align.hpp"
#include "tlsa/corpus.hpp"
#include "tlsa/lexicon.hpp"

namespace tlsa {

struct RefineConfig {
  double epsilon = 0.01;
  void validate() const;
};

enum class CandidateStatus { Kept, SourceLabel, SourceSynonym, BelowThreshold };

std::string_view to_string(CandidateStatus status) noexcept;

struct CandidateRow {
  std::string label;
  std::uint64_t count = 0;
  CandidateStatus status = CandidateStatus::BelowThreshold;
  bool kept() const noexcept { return status == CandidateStatus::Kept; }
};

struct RefineResult {
  LabelSet private_labels{LabelKind::PrivatePredicted};  // C_p, sorted by label
  double tau_freq = 0.0;
  std::vector<CandidateRow> rows;  // every banked label, bank order
};

/// tau_freq = epsilon * max count over the whole bank (source labels
/// included); keeps labels counted strictly above tau_freq that are neither
/// source labels nor synonyms of one (when `db` is given).
/// Throws EmptyBank, InvalidArgument.
RefineResult frequency_filter(const FrequencyBank& bank, const LabelSet& source,
                              const RefineConfig& cfg, const SynonymDb* db = nullptr);

/// Rows sorted by descending count, ties by label.
std::vector<CandidateRow> report_candidates(const RefineResult& result);

/// TSV with header: label \t count \t kept \t reason.
void write_report(const std::vector<CandidateRow>& rows, const std::filesystem::path& path);

}  // namespace tlsa
