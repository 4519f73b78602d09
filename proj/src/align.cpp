#include "tlsa/align.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "tlsa/error.hpp"
#include "tlsa/text.hpp"

namespace tlsa {

SimilarityMatrix score(const EmbeddingTable& images, const EmbeddingTable& labels,
                       std::size_t n_source, std::size_t first,
                       std::optional<std::size_t> count) {
  if (images.dim() != labels.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "image dim " + std::to_string(images.dim()) + " vs label dim " +
                    std::to_string(labels.dim()));
  }
  if (!images.normalized() || !labels.normalized()) {
    throw Error(ErrorCode::NotNormalized, "score() needs unit-normalized tables");
  }
  if (n_source > labels.size()) {
    throw Error(ErrorCode::InvalidArgument, "n_source exceeds label count");
  }
  const std::size_t last = count ? std::min(images.size(), first + *count) : images.size();
  first = std::min(first, last);

  SimilarityMatrix s;
  s.label_order = labels.ids();
  s.n_source = n_source;
  s.sample_ids.assign(images.ids().begin() + static_cast<std::ptrdiff_t>(first),
                      images.ids().begin() + static_cast<std::ptrdiff_t>(last));
  s.scores.resize(s.rows() * s.cols());
  for (std::size_t i = first; i < last; ++i) {
    auto img = images.row(i);
    for (std::size_t j = 0; j < labels.size(); ++j) {
      auto lab = labels.row(j);
      double dot = 0.0;
      for (std::size_t d = 0; d < img.size(); ++d) dot += static_cast<double>(img[d]) * lab[d];
      s.scores[(i - first) * s.cols() + j] = dot;
    }
  }
  return s;
}

GapThreshold gap_threshold(std::span<const double> topk_scores) {
  if (topk_scores.size() < 2) {
    throw Error(ErrorCode::TooFewScores, "gap threshold needs at least 2 scores");
  }
  double best_gap = -1.0;
  std::size_t best = 1;
  for (std::size_t j = 1; j < topk_scores.size(); ++j) {
    const double gap = topk_scores[j - 1] - topk_scores[j];
    if (gap < 0.0) throw Error(ErrorCode::InvalidArgument, "scores must be non-increasing");
    if (gap > best_gap + kGapTieTolerance) {
      best_gap = gap;
      best = j;
    }
  }
  return {best, topk_scores[best]};
}

double avg_threshold(std::span<const double> topk_scores) {
  if (topk_scores.empty()) throw Error(ErrorCode::TooFewScores, "mean of an empty list");
  double sum = 0.0;
  for (double s : topk_scores) sum += s;
  return sum / static_cast<double>(topk_scores.size());
}

PredictionSet build_prediction_set(std::span<const double> row,
                                   std::span<const std::string> label_order, std::size_t k,
                                   ThresholdRule rule, std::string sample_id) {
  if (row.size() != label_order.size()) {
    throw Error(ErrorCode::DimensionMismatch, "score row and label order differ in length");
  }
  k = std::min(k, row.size());
  if (k < 2) throw Error(ErrorCode::TooFewScores, "prediction set needs k >= 2");

  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return row[a] != row[b] ? row[a] > row[b] : a < b;
                    });

  PredictionSet set;
  set.sample_id = std::move(sample_id);
  std::vector<double> top(k);
  for (std::size_t r = 0; r < k; ++r) {
    top[r] = row[order[r]];
    set.topk.push_back({order[r], label_order[order[r]], top[r]});
  }
  set.tau_gap = gap_threshold(top).tau_gap;
  set.tau_avg = avg_threshold(top);
  switch (rule) {
    case ThresholdRule::Min: set.tau_set = std::min(set.tau_gap, set.tau_avg); break;
    case ThresholdRule::GapOnly: set.tau_set = set.tau_gap; break;
    case ThresholdRule::AvgOnly: set.tau_set = set.tau_avg; break;
  }
  for (const auto& e : set.topk) {
    if (e.score > set.tau_set) set.entries.push_back(e);
  }
  if (set.entries.empty()) set.entries.push_back(set.topk.front());
  return set;
}

std::optional<std::string> banked_label(const Verdict& verdict) {
  if (const auto* s = std::get_if<Shared>(&verdict)) return s->label;
  if (const auto* p = std::get_if<Private>(&verdict)) return p->label;
  return std::nullopt;
}

Verdict classify_sample(const PredictionSet& pred_set, const LabelSet& source,
                        const std::optional<std::string>& discovered_label) {
  const PredictionEntry* best_source = nullptr;
  for (const auto& e : pred_set.entries) {
    if (!source.contains(e.label)) continue;
    if (best_source == nullptr || e.score > best_source->score ||
        (e.score == best_source->score && e.column < best_source->column)) {
      best_source = &e;
    }
  }
  if (best_source != nullptr) return Shared{best_source->label};
  if (discovered_label && !discovered_label->empty()) return Private{*discovered_label};
  return Skipped{};
}

void FrequencyBank::add(const std::string& label, std::uint64_t n) {
  counts_[label] += n;
  total_ += n;
}

void FrequencyBank::merge(const FrequencyBank& other) {
  for (const auto& [label, n] : other.counts_) add(label, n);
}

std::uint64_t FrequencyBank::count(const std::string& label) const {
  auto it = counts_.find(label);
  return it == counts_.end() ? 0 : it->second;
}

std::uint64_t FrequencyBank::max_count() const noexcept {
  std::uint64_t best = 0;
  for (const auto& [label, n] : counts_) best = std::max(best, n);
  return best;
}

void write_bank(const FrequencyBank& bank, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& [label, n] : bank.counts()) out << label << '\t' << n << '\n';
}

FrequencyBank load_bank(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  FrequencyBank bank;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto tab = line.rfind('\t');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (tab == std::string::npos) throw Error(ErrorCode::MalformedRecord, where);
    std::uint64_t n = 0;
    try {
      std::size_t used = 0;
      n = std::stoull(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedRecord, where + ": bad count");
    }
    bank.add(normalize_label(line.substr(0, tab)), n);
  }
  return bank;
}

AlignmentResult run_alignment(const EmbeddingTable& images, const EmbeddingTable& labels,
                              const LabelSet& source,
                              const std::map<std::string, std::string>& discovered,
                              const AlignOptions& options) {
  const std::size_t n_source = source.size();
  if (labels.size() < n_source) {
    throw Error(ErrorCode::InvalidArgument, "label table shorter than the source set");
  }
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const bool is_source = source.contains(normalize_label(labels.id(j)));
    if ((j < n_source) != is_source) {
      throw Error(ErrorCode::InvalidArgument,
                  "label table must list source labels first: '" + labels.id(j) + "'");
    }
  }
  if (options.batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch_size must be > 0");

  AlignmentResult result;
  result.verdicts.reserve(images.size());
  for (std::size_t first = 0; first < images.size(); first += options.batch_size) {
    SimilarityMatrix s = score(images, labels, n_source, first, options.batch_size);
    FrequencyBank batch_bank;
    for (std::size_t i = 0; i < s.rows(); ++i) {
      const std::string& id = s.sample_ids[i];
      SampleAlignment sample{build_prediction_set(s.row(i), s.label_order, options.k,
                                                  options.rule, id),
                             Skipped{}};
      std::optional<std::string> r_i;
      if (auto it = discovered.find(id); it != discovered.end()) r_i = it->second;
      sample.verdict = classify_sample(sample.pred_set, source, r_i);
      if (auto label = banked_label(sample.verdict)) {
        batch_bank.add(*label);
      } else if (options.on_skip) {
        options.on_skip(id);
      }
      if (options.on_sample) options.on_sample(sample);
      result.verdicts.push_back(std::move(sample.verdict));
    }
    result.bank.merge(batch_bank);
  }
  return result;
}

std::string audit_line(const SampleAlignment& sample) {
  nlohmann::json topk = nlohmann::json::array();
  for (const auto& e : sample.pred_set.topk) {
    topk.push_back({{"label", e.label}, {"score", e.score}});
  }
  nlohmann::json set = nlohmann::json::array();
  for (const auto& e : sample.pred_set.entries) set.push_back(e.label);
  std::string verdict = "skipped";
  if (std::holds_alternative<Shared>(sample.verdict)) verdict = "shared";
  if (std::holds_alternative<Private>(sample.verdict)) verdict = "private";
  auto banked = banked_label(sample.verdict);
  nlohmann::ordered_json line;
  line["sample_id"] = sample.pred_set.sample_id;
  line["topk"] = topk;
  line["prediction_set"] = set;
  line["tau_gap"] = sample.pred_set.tau_gap;
  line["tau_avg"] = sample.pred_set.tau_avg;
  line["tau_set"] = sample.pred_set.tau_set;
  line["verdict"] = verdict;
  line["banked_label"] = banked ? nlohmann::json(*banked) : nlohmann::json(nullptr);
  return line.dump();
}

}  // namespace tlsa
