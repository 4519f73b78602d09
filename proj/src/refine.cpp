#include "tlsa/refine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "tlsa/error.hpp"

namespace tlsa {

void RefineConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
  }
}

std::string_view to_string(CandidateStatus status) noexcept {
  switch (status) {
    case CandidateStatus::Kept: return "kept";
    case CandidateStatus::SourceLabel: return "source_label";
    case CandidateStatus::SourceSynonym: return "source_synonym";
    case CandidateStatus::BelowThreshold: return "below_threshold";
  }
  return "kept";
}

RefineResult frequency_filter(const FrequencyBank& bank, const LabelSet& source,
                              const RefineConfig& cfg, const SynonymDb* db) {
  cfg.validate();
  if (bank.empty()) throw Error(ErrorCode::EmptyBank, "frequency bank is empty");

  RefineResult result;
  result.tau_freq = cfg.epsilon * static_cast<double>(bank.max_count());
  for (const auto& [label, n] : bank.counts()) {
    CandidateRow row{label, n, CandidateStatus::Kept};
    if (source.contains(label)) {
      row.status = CandidateStatus::SourceLabel;
    } else if (!(static_cast<double>(n) > result.tau_freq)) {
      row.status = CandidateStatus::BelowThreshold;
    } else if (db != nullptr &&
               std::any_of(source.begin(), source.end(),
                           [&](const std::string& s) { return db->are_synonyms(label, s); })) {
      row.status = CandidateStatus::SourceSynonym;
    }
    if (row.kept()) result.private_labels.insert(label);
    result.rows.push_back(std::move(row));
  }
  return result;
}

std::vector<CandidateRow> report_candidates(const RefineResult& result) {
  std::vector<CandidateRow> rows = result.rows;
  std::stable_sort(rows.begin(), rows.end(), [](const CandidateRow& a, const CandidateRow& b) {
    return a.count != b.count ? a.count > b.count : a.label < b.label;
  });
  return rows;
}

void write_report(const std::vector<CandidateRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "label\tcount\tkept\treason\n";
  for (const auto& r : rows) {
    out << r.label << '\t' << r.count << '\t' << (r.kept() ? "true" : "false") << '\t'
        << to_string(r.status) << '\n';
  }
}

}  // namespace tlsa
