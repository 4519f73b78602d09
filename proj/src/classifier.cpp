#include "tlsa/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tlsa/error.hpp"
#include "tlsa/text.hpp"

namespace tlsa {

UniversalClassifier UniversalClassifier::build(const EmbeddingTable& source_emb,
                                               const EmbeddingTable& private_emb) {
  if (!private_emb.empty() && source_emb.dim() != private_emb.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "source and private embeddings differ in dim");
  }
  if (source_emb.empty()) throw Error(ErrorCode::InvalidArgument, "classifier needs source labels");
  UniversalClassifier clf;
  clf.weights_ = EmbeddingTable(source_emb.dim());
  std::vector<std::string> seen;
  auto append = [&](const EmbeddingTable& table) {
    for (std::size_t r = 0; r < table.size(); ++r) {
      std::string label = normalize_label(table.id(r));
      if (std::find(seen.begin(), seen.end(), label) != seen.end()) {
        throw Error(ErrorCode::LabelCollision, label);
      }
      seen.push_back(label);
      clf.weights_.add_row(std::move(label), table.row(r));
    }
  };
  append(source_emb);
  append(private_emb);
  clf.weights_.mark_normalized();
  clf.n_source_ = source_emb.size();
  return clf;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double top = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

std::vector<double> cosine_scores(const UniversalClassifier& clf, std::span<const double> image) {
  if (image.size() != clf.dim()) {
    throw Error(ErrorCode::ShapeMismatch, "image dim " + std::to_string(image.size()) +
                                              " vs classifier dim " + std::to_string(clf.dim()));
  }
  std::vector<double> scores(clf.size());
  for (std::size_t j = 0; j < clf.size(); ++j) {
    auto w = clf.weights().row(j);
    double dot = 0.0;
    for (std::size_t d = 0; d < image.size(); ++d) dot += image[d] * static_cast<double>(w[d]);
    scores[j] = dot;
  }
  return scores;
}

Prediction predict(const UniversalClassifier& clf, std::span<const double> image,
                   double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
  std::vector<double> logits = cosine_scores(clf, image);
  Prediction p;
  p.label_index = static_cast<std::size_t>(
      std::distance(logits.begin(), std::max_element(logits.begin(), logits.end())));
  p.label = clf.label_order()[p.label_index];
  p.is_unknown = p.label_index >= clf.n_source();
  p.class_index = p.is_unknown ? clf.unknown_class() : p.label_index;
  for (double& v : logits) v /= temperature;
  p.probs = softmax(logits);
  return p;
}

Prediction predict(const UniversalClassifier& clf, std::span<const float> image,
                   double temperature) {
  std::vector<double> widened(image.begin(), image.end());
  return predict(clf, std::span<const double>(widened), temperature);
}

PredictionRecord to_record(std::string sample_id, Prediction prediction, bool keep_probs) {
  PredictionRecord rec;
  rec.sample_id = std::move(sample_id);
  rec.class_index = prediction.class_index;
  rec.label = std::move(prediction.label);
  rec.is_unknown = prediction.is_unknown;
  if (keep_probs) rec.probs = std::move(prediction.probs);
  return rec;
}

std::vector<PredictionRecord> predict_all(const UniversalClassifier& clf,
                                          const EmbeddingTable& images, double temperature,
                                          bool keep_probs) {
  std::vector<PredictionRecord> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back(to_record(images.id(i), predict(clf, images.row(i), temperature), keep_probs));
  }
  return out;
}

void write_predictions(std::span<const PredictionRecord> records,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::ordered_json line;
    line["sample_id"] = r.sample_id;
    line["class_index"] = r.class_index;
    line["label"] = r.label;
    line["is_unknown"] = r.is_unknown;
    if (r.probs) line["probs"] = *r.probs;
    out << line.dump() << '\n';
  }
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      auto obj = nlohmann::json::parse(line);
      PredictionRecord r;
      r.sample_id = obj.at("sample_id").get<std::string>();
      r.class_index = obj.at("class_index").get<std::size_t>();
      r.label = obj.at("label").get<std::string>();
      r.is_unknown = obj.at("is_unknown").get<bool>();
      if (obj.contains("probs")) r.probs = obj["probs"].get<std::vector<double>>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace tlsa
