#include "tlsa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "tlsa/error.hpp"
#include "tlsa/text.hpp"

namespace tlsa {

double h_score(double a_common, double a_private) {
  if (a_common <= 0.0 || a_private <= 0.0) return 0.0;
  return 2.0 * a_common * a_private / (a_common + a_private);
}

double h3_score(double a_common, double a_private, double nmi_value) {
  if (a_common <= 0.0 || a_private <= 0.0 || nmi_value <= 0.0) return 0.0;
  return 3.0 / (1.0 / a_common + 1.0 / a_private + 1.0 / nmi_value);
}

namespace {

double entropy(const std::map<int, std::size_t>& sizes, double n) {
  double h = 0.0;
  for (const auto& [label, count] : sizes) {
    const double p = static_cast<double>(count) / n;
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace

double nmi(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw Error(ErrorCode::ShapeMismatch, "partitions differ in length");
  }
  if (predicted.empty()) throw Error(ErrorCode::NoPrivateSamples, "nmi of an empty partition");
  const double n = static_cast<double>(predicted.size());

  std::map<int, std::size_t> pred_sizes;
  std::map<int, std::size_t> true_sizes;
  std::map<std::pair<int, int>, std::size_t> joint;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    ++pred_sizes[predicted[i]];
    ++true_sizes[truth[i]];
    ++joint[{predicted[i], truth[i]}];
  }
  const double h_pred = entropy(pred_sizes, n);
  const double h_true = entropy(true_sizes, n);
  if (pred_sizes.size() == 1 && true_sizes.size() == 1) return 1.0;
  if (h_pred == 0.0 || h_true == 0.0) return 0.0;

  double mi = 0.0;
  for (const auto& [cell, count] : joint) {
    const double pij = static_cast<double>(count) / n;
    const double pi = static_cast<double>(pred_sizes[cell.first]) / n;
    const double pj = static_cast<double>(true_sizes[cell.second]) / n;
    mi += pij * std::log(pij / (pi * pj));
  }
  return std::clamp(mi / ((h_pred + h_true) / 2.0), 0.0, 1.0);
}

std::vector<TruthRecord> load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<TruthRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto obj = nlohmann::json::parse(line);
      out.push_back({obj.at("sample_id").get<std::string>(),
                     normalize_label(obj.at("true_label").get<std::string>()),
                     obj.at("is_private").get<bool>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRecord,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

EvalResult evaluate(std::span<const PredictionRecord> preds, std::span<const TruthRecord> truth,
                    const SplitConfig& split, const EvalOptions& options) {
  split.validate();
  if (preds.empty()) throw Error(ErrorCode::EmptyEval, "no predictions");
  std::unordered_map<std::string, const TruthRecord*> by_id;
  for (const auto& t : truth) by_id.emplace(t.sample_id, &t);

  struct Tally {
    std::size_t correct = 0;
    std::size_t total = 0;
  };
  std::map<std::string, Tally> common;
  std::size_t private_total = 0;
  std::size_t private_unknown = 0;
  std::vector<const PredictionRecord*> private_preds;

  for (const auto& p : preds) {
    auto it = by_id.find(p.sample_id);
    if (it == by_id.end()) throw Error(ErrorCode::MissingTruth, p.sample_id);
    const TruthRecord& t = *it->second;
    if (t.is_private) {
      if (!split.has_target_private()) {
        throw Error(ErrorCode::InvalidArgument,
                    "private sample " + t.sample_id + " in a " + std::string(to_string(split.setting)) +
                        " split");
      }
      ++private_total;
      if (p.is_unknown) ++private_unknown;
      private_preds.push_back(&p);
    } else {
      Tally& tally = common[t.true_label];
      ++tally.total;
      if (!p.is_unknown && normalize_label(p.label) == t.true_label) ++tally.correct;
    }
  }

  EvalResult r;
  r.setting = split.setting;
  std::size_t correct = 0;
  std::size_t total = 0;
  double class_mean = 0.0;
  for (const auto& [label, tally] : common) {
    const double acc = static_cast<double>(tally.correct) / static_cast<double>(tally.total);
    r.per_class[label] = acc;
    class_mean += acc;
    correct += tally.correct;
    total += tally.total;
  }
  if (!common.empty()) class_mean /= static_cast<double>(common.size());
  const double instance_mean =
      total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  r.acc_common = options.averaging == CommonAveraging::PerClass ? class_mean : instance_mean;

  if (!split.has_target_private()) {
    if (common.empty()) throw Error(ErrorCode::EmptyEval, "no common-class samples");
    r.h_score = class_mean;
    r.h3_score = class_mean;
    return r;
  }
  if (private_total == 0) throw Error(ErrorCode::NoPrivateSamples, "open split without private samples");

  r.acc_private = static_cast<double>(private_unknown) / static_cast<double>(private_total);

  // Cluster ids are dense in label order so the result does not depend on
  // record order.
  std::map<std::string, int> pred_ids;
  std::map<std::string, int> true_ids;
  for (const PredictionRecord* p : private_preds) {
    pred_ids.emplace(normalize_label(p->label), 0);
    true_ids.emplace(by_id.at(p->sample_id)->true_label, 0);
  }
  int next = 0;
  for (auto& [label, id] : pred_ids) id = next++;
  next = 0;
  for (auto& [label, id] : true_ids) id = next++;
  std::vector<int> pred_clusters;
  std::vector<int> true_clusters;
  for (const PredictionRecord* p : private_preds) {
    pred_clusters.push_back(pred_ids.at(normalize_label(p->label)));
    true_clusters.push_back(true_ids.at(by_id.at(p->sample_id)->true_label));
  }
  r.nmi = nmi(pred_clusters, true_clusters);

  if (common.empty()) throw Error(ErrorCode::EmptyEval, "no common-class samples");
  r.h_score = h_score(r.acc_common, *r.acc_private);
  r.h3_score = h3_score(r.acc_common, *r.acc_private, *r.nmi);
  return r;
}

std::string to_json(const EvalResult& result) {
  nlohmann::ordered_json j;
  j["setting"] = std::string(to_string(result.setting));
  j["acc_common"] = result.acc_common;
  j["acc_private"] = result.acc_private ? nlohmann::ordered_json(*result.acc_private)
                                        : nlohmann::ordered_json(nullptr);
  j["nmi"] = result.nmi ? nlohmann::ordered_json(*result.nmi) : nlohmann::ordered_json(nullptr);
  j["h_score"] = result.h_score;
  j["h3_score"] = result.h3_score;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (const auto& [label, acc] : result.per_class) per_class[label] = acc;
  j["per_class"] = per_class;
  return j.dump(2);
}

}  // namespace tlsa
