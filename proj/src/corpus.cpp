#include "tlsa/corpus.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tlsa/error.hpp"
#include "tlsa/text.hpp"

namespace tlsa {


EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "embedding dim must be positive");
}

std::span<const float> EmbeddingTable::row(std::size_t index) const {
  if (index >= ids_.size()) throw std::out_of_range("embedding row out of range");
  return {data_.data() + index * dim_, dim_};
}

std::span<float> EmbeddingTable::mutable_row(std::size_t index) {
  if (index >= ids_.size()) throw std::out_of_range("embedding row out of range");
  normalized_ = false;
  return {data_.data() + index * dim_, dim_};
}

void EmbeddingTable::add_row(std::string id, std::span<const float> values) {
  if (dim_ == 0) throw Error(ErrorCode::InvalidArgument, "table has no dimension");
  if (values.size() != dim_) {
    throw Error(ErrorCode::DimensionMismatch,
                "row '" + id + "' has " + std::to_string(values.size()) + " values, expected " +
                    std::to_string(dim_));
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "row '" + id + "'");
  }
  if (index_.contains(id)) throw Error(ErrorCode::DuplicateId, id);
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  data_.insert(data_.end(), values.begin(), values.end());
  normalized_ = false;
}

std::optional<std::size_t> EmbeddingTable::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingTable::mark_normalized() {
  for (std::size_t i = 0; i < size(); ++i) {
    double sq = 0.0;
    for (float v : row(i)) sq += static_cast<double>(v) * v;
    if (std::abs(std::sqrt(sq) - 1.0) > kUnitNormTolerance) {
      throw Error(ErrorCode::NotNormalized, "row '" + ids_[i] + "' is not unit norm");
    }
  }
  normalized_ = true;
}

bool EmbeddingTable::operator==(const EmbeddingTable& other) const {
  if (dim_ != other.dim_ || normalized_ != other.normalized_ || ids_ != other.ids_) return false;
  // Bitwise comparison: the round-trip contract is bit-exact.
  return data_.size() == other.data_.size() &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

namespace {

constexpr std::array<char, 4> kMagic{'E', 'M', 'B', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes{};
  auto raw = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    std::size_t src = std::endian::native == std::endian::little ? i : sizeof(T) - 1 - i;
    bytes[i] = static_cast<char>(raw[src]);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename T>
bool get_le(std::istream& in, T& value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) return false;
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  value = std::bit_cast<T>(bytes);
  return true;
}

}  // namespace

EmbeddingTable read_embeddings(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw Error(ErrorCode::MalformedHeader, "missing EMB1 magic");
  }
  std::uint32_t version = 0;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  std::uint8_t flag = 0;
  if (!get_le(in, version) || !get_le(in, dim) || !get_le(in, count) || !get_le(in, flag)) {
    throw Error(ErrorCode::MalformedHeader, "truncated header");
  }
  if (version != kVersion) {
    throw Error(ErrorCode::MalformedHeader, "unsupported version " + std::to_string(version));
  }
  if (dim == 0) throw Error(ErrorCode::MalformedHeader, "dim must be positive");
  if (flag > 1) throw Error(ErrorCode::MalformedHeader, "bad normalized flag");

  EmbeddingTable table(dim);
  std::vector<float> values(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    std::uint16_t id_len = 0;
    if (!get_le(in, id_len)) {
      throw Error(ErrorCode::DimensionMismatch,
                  "payload ends before row " + std::to_string(r) + " of " + std::to_string(count));
    }
    std::string id(id_len, '\0');
    if (!in.read(id.data(), id_len)) {
      throw Error(ErrorCode::DimensionMismatch, "payload ends inside id of row " + std::to_string(r));
    }
    for (std::uint32_t j = 0; j < dim; ++j) {
      if (!get_le(in, values[j])) {
        throw Error(ErrorCode::DimensionMismatch,
                    "row '" + id + "' has " + std::to_string(j) + " values, expected " +
                        std::to_string(dim));
      }
    }
    table.add_row(std::move(id), values);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::DimensionMismatch, "trailing bytes after declared rows");
  }
  if (flag == 1) table.mark_normalized();
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_embeddings(in);
}

void write_embeddings(const EmbeddingTable& table, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim()));
  put_le<std::uint64_t>(out, table.size());
  put_le<std::uint8_t>(out, table.normalized() ? 1 : 0);
  for (std::size_t r = 0; r < table.size(); ++r) {
    const std::string& id = table.id(r);
    if (id.size() > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "id longer than 65535 bytes");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (float v : table.row(r)) put_le(out, v);
  }
}

void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_embeddings(table, out);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

EmbeddingTable normalize_rows(const EmbeddingTable& table) {
  EmbeddingTable out(table.dim());
  std::vector<float> scaled(table.dim());
  for (std::size_t r = 0; r < table.size(); ++r) {
    auto row = table.row(r);
    double sq = 0.0;
    for (float v : row) sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(sq);
    if (norm == 0.0) throw Error(ErrorCode::ZeroNormRow, table.id(r));
    for (std::size_t j = 0; j < row.size(); ++j) {
      scaled[j] = static_cast<float>(row[j] / norm);
    }
    out.add_row(table.id(r), scaled);
  }
  out.mark_normalized();
  return out;
}

EmbeddingTable select_rows(const EmbeddingTable& table, std::span<const std::string> labels) {
  std::unordered_map<std::string, std::size_t> by_label;
  for (std::size_t r = 0; r < table.size(); ++r) {
    by_label.emplace(normalize_label(table.id(r)), r);
  }
  EmbeddingTable out(table.dim());
  for (const std::string& label : labels) {
    auto it = by_label.find(normalize_label(label));
    if (it == by_label.end()) throw Error(ErrorCode::MissingEmbedding, label);
    out.add_row(label, table.row(it->second));
  }
  if (table.normalized()) out.mark_normalized();
  return out;
}

LabelSet::LabelSet(LabelKind kind, std::span<const std::string> raw_labels) : kind_(kind) {
  for (const std::string& l : raw_labels) insert(l);
}

LabelSet::LabelSet(LabelKind kind, std::initializer_list<std::string_view> raw_labels)
    : kind_(kind) {
  for (std::string_view l : raw_labels) insert(l);
}

bool LabelSet::insert(std::string_view raw) {
  std::string label = normalize_label(raw);
  if (label.empty() || index_.contains(label)) return false;
  index_.emplace(label, labels_.size());
  labels_.push_back(std::move(label));
  return true;
}

bool LabelSet::contains(std::string_view label) const {
  return index_.contains(std::string(label));
}

std::optional<std::size_t> LabelSet::index_of(std::string_view label) const {
  auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

LabelSet load_label_set(const std::filesystem::path& path, LabelKind kind) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  LabelSet labels(kind);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    labels.insert(line);
  }
  return labels;
}

void write_label_set(const LabelSet& labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const std::string& l : labels) out << l << '\n';
}

std::vector<DiscoveredLabelRecord> read_captions(std::istream& in, std::size_t max_prompts) {
  std::vector<DiscoveredLabelRecord> records;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = "captions line " + std::to_string(line_no);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::MalformedRecord, where + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("sample_id") || !obj["sample_id"].is_string() ||
        !obj.contains("responses") || !obj["responses"].is_array()) {
      throw Error(ErrorCode::MalformedRecord, where + ": expected sample_id and responses");
    }
    DiscoveredLabelRecord rec;
    rec.sample_id = obj["sample_id"].get<std::string>();
    if (!seen.insert(rec.sample_id).second) {
      throw Error(ErrorCode::MalformedRecord, where + ": duplicate sample_id " + rec.sample_id);
    }
    const auto& responses = obj["responses"];
    if (responses.size() > max_prompts) {
      throw Error(ErrorCode::MalformedRecord,
                  where + ": " + std::to_string(responses.size()) + " responses exceed " +
                      std::to_string(max_prompts) + " prompts");
    }
    for (const auto& r : responses) {
      if (!r.is_object() || !r.contains("prompt") || !r["prompt"].is_number_integer() ||
          !r.contains("answer") || !r["answer"].is_string()) {
        throw Error(ErrorCode::MalformedRecord, where + ": bad response entry");
      }
      rec.responses.push_back({r["prompt"].get<int>(), r["answer"].get<std::string>()});
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<DiscoveredLabelRecord> load_captions(const std::filesystem::path& path,
                                                 std::size_t max_prompts) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_captions(in, max_prompts);
}

RetainFilter default_retain_filter(std::size_t max_words) {
  return [max_words](std::string_view answer) {
    if (answer.empty()) return false;
    if (answer.find(',') != std::string_view::npos) return false;
    return count_words(answer) <= max_words;
  };
}

std::optional<std::string> majority_vote(std::span<const std::string> responses,
                                         const RetainFilter& retain) {
  struct Tally {
    std::string label;
    std::size_t count = 0;
  };
  // First-occurrence order doubles as the tie-break order.
  std::vector<Tally> tallies;
  for (const std::string& raw : responses) {
    if (!retain(trim(raw))) continue;
    std::string label = normalize_label(raw);
    if (label.empty()) continue;
    auto it = std::find_if(tallies.begin(), tallies.end(),
                           [&](const Tally& t) { return t.label == label; });
    if (it == tallies.end()) {
      tallies.push_back({std::move(label), 1});
    } else {
      ++it->count;
    }
  }
  if (tallies.empty()) return std::nullopt;
  const Tally* best = &tallies.front();
  for (const Tally& t : tallies) {
    if (t.count > best->count) best = &t;
  }
  return best->label;
}

void vote_records(std::vector<DiscoveredLabelRecord>& records, const RetainFilter& retain) {
  for (auto& rec : records) {
    std::vector<std::string> answers;
    answers.reserve(rec.responses.size());
    for (const auto& r : rec.responses) answers.push_back(r.answer);
    rec.voted_label = majority_vote(answers, retain);
  }
}

DiscoveredLabels collect_discovered(std::span<const DiscoveredLabelRecord> records) {
  DiscoveredLabels out;
  std::set<std::string> unique;
  for (const auto& rec : records) {
    if (!rec.voted_label) continue;
    std::string label = normalize_label(*rec.voted_label);
    if (label.empty()) continue;
    unique.insert(label);
    out.per_sample[rec.sample_id] = std::move(label);
  }
  for (const std::string& label : unique) out.labels.insert(label);
  return out;
}

void write_sample_labels(const std::map<std::string, std::string>& per_sample,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& [id, label] : per_sample) out << id << '\t' << label << '\n';
}

std::map<std::string, std::string> load_sample_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorCode::MalformedRecord, path.string() + ":" + std::to_string(line_no));
    }
    out[line.substr(0, tab)] = normalize_label(line.substr(tab + 1));
  }
  return out;
}

std::string_view to_string(SplitSetting setting) noexcept {
  switch (setting) {
    case SplitSetting::OPDA: return "OPDA";
    case SplitSetting::ODA: return "ODA";
    case SplitSetting::PDA: return "PDA";
    case SplitSetting::CDA: return "CDA";
  }
  return "OPDA";
}

SplitSetting parse_split_setting(std::string_view text) {
  for (auto s : {SplitSetting::OPDA, SplitSetting::ODA, SplitSetting::PDA, SplitSetting::CDA}) {
    if (text == to_string(s)) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown split setting '" + std::string(text) + "'");
}

void SplitConfig::validate() const {
  auto fail = [this](const char* why) {
    throw Error(ErrorCode::InvalidArgument, std::string(to_string(setting)) + ": " + why);
  };
  if (n_source_private < 0 || n_target_private < 0) fail("class counts must be nonnegative");
  if (n_shared < 1) fail("at least one shared class is required");
  switch (setting) {
    case SplitSetting::OPDA:
      if (n_source_private == 0 || n_target_private == 0) fail("needs both private sides");
      break;
    case SplitSetting::ODA:
      if (n_source_private != 0 || n_target_private == 0) fail("needs target-private only");
      break;
    case SplitSetting::PDA:
      if (n_target_private != 0) fail("has no target-private classes");
      break;
    case SplitSetting::CDA:
      if (n_source_private != 0 || n_target_private != 0) fail("has no private classes");
      break;
  }
}

}  // namespace tlsa
