#include "tlsa/selftrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include <json.hpp>

#include "tlsa/error.hpp"

namespace tlsa {

AdapterParams AdapterParams::zeros(std::size_t dim, std::size_t bottleneck) {
  AdapterParams p;
  p.down = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(bottleneck));
  p.up = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(bottleneck), static_cast<Eigen::Index>(dim));
  p.scale = 0.0;
  return p;
}

AdapterParams AdapterParams::initial(std::size_t dim, std::size_t bottleneck, std::uint64_t seed,
                                     double scale) {
  if (dim == 0 || bottleneck == 0) {
    throw Error(ErrorCode::InvalidArgument, "adapter shape must be positive");
  }
  AdapterParams p = zeros(dim, bottleneck);
  p.scale = scale;
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index c = 0; c < p.down.cols(); ++c) {
    for (Eigen::Index r = 0; r < p.down.rows(); ++r) p.down(r, c) = dist(rng);
  }
  return p;
}

bool AdapterParams::all_finite() const {
  return down.allFinite() && up.allFinite() && std::isfinite(scale);
}

bool AdapterParams::same_shape(const AdapterParams& other) const noexcept {
  return down.rows() == other.down.rows() && down.cols() == other.down.cols() &&
         up.rows() == other.up.rows() && up.cols() == other.up.cols();
}

bool AdapterParams::operator==(const AdapterParams& other) const {
  return same_shape(other) && down == other.down && up == other.up && scale == other.scale;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) fail("momentum must be in [0, 1)");
  if (!(ema_alpha > 0.0 && ema_alpha < 1.0)) fail("ema_alpha must be in (0, 1)");
  if (bottleneck == 0) fail("bottleneck must be positive");
  if (!(temperature > 0.0)) fail("temperature must be positive");
}

FrozenHead::FrozenHead(const UniversalClassifier& clf)
    : weights_(static_cast<Eigen::Index>(clf.size()), static_cast<Eigen::Index>(clf.dim())) {
  for (std::size_t j = 0; j < clf.size(); ++j) {
    auto row = clf.weights().row(j);
    for (std::size_t d = 0; d < row.size(); ++d) {
      weights_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(d)) = row[d];
    }
  }
}

namespace {

struct ForwardState {
  Eigen::VectorXd hidden;     // down^T x
  Eigen::VectorXd activated;  // relu(hidden)
  Eigen::VectorXd residual;   // x + scale * up^T activated
  double norm = 0.0;
  Eigen::VectorXd z;
};

void check_shape(const AdapterParams& adapter, Eigen::Index dim) {
  if (adapter.down.rows() != dim || adapter.up.cols() != dim ||
      adapter.down.cols() != adapter.up.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "adapter shape does not match input dim " +
                                              std::to_string(dim));
  }
}

ForwardState forward(const AdapterParams& adapter, const Eigen::VectorXd& x) {
  check_shape(adapter, x.size());
  ForwardState s;
  s.hidden = adapter.down.transpose() * x;
  s.activated = s.hidden.cwiseMax(0.0);
  s.residual = x + adapter.scale * (adapter.up.transpose() * s.activated);
  s.norm = s.residual.norm();
  if (!(s.norm > 0.0)) throw Error(ErrorCode::ZeroNormRow, "adapter output has zero norm");
  s.z = s.residual / s.norm;
  return s;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp().matrix();
  return p / p.sum();
}

Eigen::VectorXd to_vector(std::span<const float> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Eigen::Index>(i)) = values[i];
  return v;
}

}  // namespace

Eigen::VectorXd apply_adapter(const AdapterParams& adapter, const Eigen::VectorXd& x) {
  return forward(adapter, x).z;
}

Eigen::VectorXd student_forward(const AdapterParams& adapter, const FrozenHead& head,
                                const Eigen::VectorXd& image, double temperature) {
  if (static_cast<std::size_t>(image.size()) != head.dim()) {
    throw Error(ErrorCode::ShapeMismatch, "image dim does not match classifier");
  }
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
  return softmax(head.weights() * apply_adapter(adapter, image) / temperature);
}

std::vector<double> student_forward(const AdapterParams& adapter, const UniversalClassifier& clf,
                                    std::span<const float> image, double temperature) {
  FrozenHead head(clf);
  Eigen::VectorXd p = student_forward(adapter, head, to_vector(image), temperature);
  return {p.data(), p.data() + p.size()};
}

LossAndGrad loss_and_grad(const AdapterParams& adapter, const FrozenHead& head,
                          std::span<const Eigen::VectorXd> images,
                          std::span<const Eigen::VectorXd> teacher_targets, double temperature,
                          Reduction reduction) {
  if (images.size() != teacher_targets.size()) {
    throw Error(ErrorCode::ShapeMismatch, "images and targets differ in count");
  }
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
  const auto dim = static_cast<Eigen::Index>(head.dim());
  check_shape(adapter, dim);

  LossAndGrad out;
  out.grad = AdapterParams::zeros(adapter.dim(), adapter.bottleneck());
  if (images.empty()) return out;
  const double weight =
      reduction == Reduction::Mean ? 1.0 / static_cast<double>(images.size()) : 1.0;

  const Eigen::MatrixXd& w = head.weights();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Eigen::VectorXd& x = images[i];
    const Eigen::VectorXd& q = teacher_targets[i];
    if (x.size() != dim || static_cast<std::size_t>(q.size()) != head.labels()) {
      throw Error(ErrorCode::ShapeMismatch, "batch entry " + std::to_string(i));
    }
    ForwardState s = forward(adapter, x);
    const Eigen::VectorXd logits = w * s.z / temperature;
    const double top = logits.maxCoeff();
    const double lse = top + std::log((logits.array() - top).exp().sum());

    double loss = 0.0;
    for (Eigen::Index j = 0; j < q.size(); ++j) {
      if (q(j) != 0.0) loss -= q(j) * (logits(j) - lse);
    }
    out.loss += weight * loss;

    const Eigen::VectorXd p = (logits.array() - lse).exp().matrix();
    const Eigen::VectorXd d_logits = weight * (p * q.sum() - q);
    const Eigen::VectorXd d_z = w.transpose() * d_logits / temperature;
    const Eigen::VectorXd d_u = (d_z - s.z * s.z.dot(d_z)) / s.norm;

    out.grad.up.noalias() += adapter.scale * s.activated * d_u.transpose();
    out.grad.scale += d_u.dot(adapter.up.transpose() * s.activated);
    Eigen::VectorXd d_hidden = adapter.scale * (adapter.up * d_u);
    for (Eigen::Index m = 0; m < d_hidden.size(); ++m) {
      if (!(s.hidden(m) > 0.0)) d_hidden(m) = 0.0;
    }
    out.grad.down.noalias() += x * d_hidden.transpose();
  }
  return out;
}

AdapterParams ema_update(const AdapterParams& teacher, const AdapterParams& student, double alpha) {
  if (!teacher.same_shape(student)) throw Error(ErrorCode::ShapeMismatch, "ema_update");
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "ema alpha must lie in [0, 1]");
  }
  // Elements already in agreement stay bit-identical.
  auto blend = [alpha](const Eigen::MatrixXd& t, const Eigen::MatrixXd& s) -> Eigen::MatrixXd {
    return (t.array() == s.array()).select(t, (1.0 - alpha) * s + alpha * t);
  };
  AdapterParams out;
  out.down = blend(teacher.down, student.down);
  out.up = blend(teacher.up, student.up);
  out.scale = teacher.scale == student.scale ? teacher.scale
                                             : (1.0 - alpha) * student.scale + alpha * teacher.scale;
  return out;
}

PseudoLabelSet select_pseudo_labels(std::span<const TeacherPrediction> teacher_preds,
                                    std::size_t batch_size) {
  std::map<std::size_t, std::vector<const TeacherPrediction*>> by_class;
  for (const auto& p : teacher_preds) {
    if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "confidence outside [0, 1] for " + p.sample_id);
    }
    by_class[p.class_index].push_back(&p);
  }
  PseudoLabelSet out;
  if (by_class.empty()) return out;
  const double per_class = static_cast<double>(batch_size) / static_cast<double>(by_class.size());
  for (auto& [cls, preds] : by_class) {
    std::sort(preds.begin(), preds.end(), [](const TeacherPrediction* a, const TeacherPrediction* b) {
      return a->confidence != b->confidence ? a->confidence > b->confidence
                                            : a->sample_id < b->sample_id;
    });
    const auto cap = static_cast<std::size_t>(
        std::floor(std::min(static_cast<double>(preds.size()), per_class)));
    for (std::size_t i = 0; i < cap; ++i) out.entries.push_back(*preds[i]);
  }
  return out;
}

namespace {

class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), 0);
    cursor_ = n;
  }

  std::vector<std::size_t> next(std::size_t batch_size) {
    std::vector<std::size_t> batch;
    const std::size_t want = std::min(batch_size, order_.size());
    while (batch.size() < want) {
      if (cursor_ == order_.size()) reshuffle();
      batch.push_back(order_[cursor_++]);
    }
    return batch;
  }

 private:
  void reshuffle() {
    for (std::size_t i = order_.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order_[i - 1], order_[pick(rng_)]);
    }
    cursor_ = 0;
  }

  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t cursor_ = 0;
};

void sgd_step(AdapterParams& params, AdapterParams& velocity, const AdapterParams& grad,
              const TrainConfig& cfg) {
  velocity.down = cfg.momentum * velocity.down + grad.down;
  velocity.up = cfg.momentum * velocity.up + grad.up;
  params.down -= cfg.lr * velocity.down;
  params.up -= cfg.lr * velocity.up;
  if (cfg.train_scale) {
    velocity.scale = cfg.momentum * velocity.scale + grad.scale;
    params.scale -= cfg.lr * velocity.scale;
  }
}

}  // namespace

TrainResult train(const EmbeddingTable& target_images, const UniversalClassifier& clf,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (target_images.dim() != clf.dim()) {
    throw Error(ErrorCode::ShapeMismatch, "target images and classifier differ in dim");
  }
  const FrozenHead head(clf);
  TrainResult result;
  result.student = AdapterParams::initial(clf.dim(), cfg.bottleneck, cfg.seed, cfg.init_scale);
  result.teacher = result.student;
  if (cfg.iterations == 0 || target_images.empty()) return result;

  std::vector<Eigen::VectorXd> images;
  images.reserve(target_images.size());
  for (std::size_t i = 0; i < target_images.size(); ++i) {
    images.push_back(to_vector(target_images.row(i)));
  }
  const std::size_t epoch = (images.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t period = cfg.teacher_update_period == 0 ? epoch : cfg.teacher_update_period;

  BatchSampler sampler(images.size(), cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  AdapterParams velocity = AdapterParams::zeros(clf.dim(), cfg.bottleneck);
  std::vector<TeacherPrediction> preds;
  std::vector<Eigen::VectorXd> teacher_probs(images.size());
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const std::vector<std::size_t> batch = sampler.next(cfg.batch_size);
    preds.clear();
    for (std::size_t row : batch) {
      teacher_probs[row] = student_forward(result.teacher, head, images[row], cfg.temperature);
      Eigen::Index best = 0;
      const double confidence = teacher_probs[row].maxCoeff(&best);
      preds.push_back({target_images.id(row), static_cast<std::size_t>(best),
                       std::clamp(confidence, 0.0, 1.0)});
    }
    const PseudoLabelSet selected = select_pseudo_labels(preds, batch.size());
    if (hooks.on_pseudo_labels) hooks.on_pseudo_labels(it, selected);

    std::vector<Eigen::VectorXd> xs;
    std::vector<Eigen::VectorXd> targets;
    xs.reserve(selected.entries.size());
    targets.reserve(selected.entries.size());
    for (const auto& e : selected.entries) {
      const std::size_t row = *target_images.find(e.sample_id);
      xs.push_back(images[row]);
      targets.push_back(teacher_probs[row]);
    }
    LossAndGrad lg = loss_and_grad(result.student, head, xs, targets, cfg.temperature);
    sgd_step(result.student, velocity, lg.grad, cfg);
    result.history.push_back({it, lg.loss, selected.entries.size()});

    if (period != kNeverUpdateTeacher && (it + 1) % period == 0) {
      AdapterParams updated = ema_update(result.teacher, result.student, cfg.ema_alpha);
      if (hooks.on_teacher_update) hooks.on_teacher_update(result.teacher, result.student, updated);
      result.teacher = std::move(updated);
      ++result.teacher_updates;
    }
  }
  return result;
}

std::vector<PredictionRecord> predict_adapted(const AdapterParams& adapter,
                                              const UniversalClassifier& clf,
                                              const EmbeddingTable& images, double temperature,
                                              bool keep_probs) {
  std::vector<PredictionRecord> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Eigen::VectorXd z = apply_adapter(adapter, to_vector(images.row(i)));
    out.push_back(to_record(images.id(i),
                            predict(clf, std::span<const double>(z.data(), z.size()), temperature),
                            keep_probs));
  }
  return out;
}

namespace {

void put_adapter(EmbeddingTable& table, const std::string& prefix, const AdapterParams& p) {
  std::vector<float> buf(p.dim());
  for (Eigen::Index m = 0; m < p.down.cols(); ++m) {
    for (Eigen::Index d = 0; d < p.down.rows(); ++d) buf[d] = static_cast<float>(p.down(d, m));
    table.add_row(prefix + "/down/" + std::to_string(m), buf);
  }
  for (Eigen::Index m = 0; m < p.up.rows(); ++m) {
    for (Eigen::Index d = 0; d < p.up.cols(); ++d) buf[d] = static_cast<float>(p.up(m, d));
    table.add_row(prefix + "/up/" + std::to_string(m), buf);
  }
}

AdapterParams get_adapter(const EmbeddingTable& table, const std::string& prefix,
                          std::size_t bottleneck, double scale) {
  AdapterParams p = AdapterParams::zeros(table.dim(), bottleneck);
  p.scale = scale;
  for (std::size_t m = 0; m < bottleneck; ++m) {
    auto down = table.find(prefix + "/down/" + std::to_string(m));
    auto up = table.find(prefix + "/up/" + std::to_string(m));
    if (!down || !up) {
      throw Error(ErrorCode::MalformedRecord, "checkpoint lacks " + prefix + " row " +
                                                  std::to_string(m));
    }
    auto drow = table.row(*down);
    auto urow = table.row(*up);
    for (std::size_t d = 0; d < table.dim(); ++d) {
      p.down(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m)) = drow[d];
      p.up(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d)) = urow[d];
    }
  }
  return p;
}

}  // namespace

AdapterParams round_to_float(const AdapterParams& params) {
  AdapterParams out;
  out.down = params.down.cast<float>().cast<double>();
  out.up = params.up.cast<float>().cast<double>();
  out.scale = params.scale;
  return out;
}

void save_checkpoint(const std::filesystem::path& stem, const TrainResult& result,
                     const TrainConfig& cfg) {
  EmbeddingTable table(result.student.dim());
  put_adapter(table, "student", result.student);
  put_adapter(table, "teacher", result.teacher);
  std::filesystem::path emb = stem;
  emb += ".emb";
  write_embeddings(table, emb);

  nlohmann::ordered_json meta;
  meta["format"] = "tlsa-adapter";
  meta["dim"] = result.student.dim();
  meta["bottleneck"] = result.student.bottleneck();
  meta["student_scale"] = result.student.scale;
  meta["teacher_scale"] = result.teacher.scale;
  meta["teacher_updates"] = result.teacher_updates;
  meta["config"] = {{"batch_size", cfg.batch_size},
                    {"lr", cfg.lr},
                    {"momentum", cfg.momentum},
                    {"iterations", cfg.iterations},
                    {"ema_alpha", cfg.ema_alpha},
                    {"teacher_update_period", cfg.teacher_update_period},
                    {"temperature", cfg.temperature},
                    {"init_scale", cfg.init_scale},
                    {"train_scale", cfg.train_scale},
                    {"seed", cfg.seed}};
  std::filesystem::path json = stem;
  json += ".json";
  std::ofstream out(json, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + json.string());
  out << meta.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& stem) {
  std::filesystem::path json = stem;
  json += ".json";
  std::ifstream in(json);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + json.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
    if (meta.at("format").get<std::string>() != "tlsa-adapter") {
      throw Error(ErrorCode::MalformedRecord, json.string() + ": not an adapter checkpoint");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, json.string() + ": " + e.what());
  }
  std::filesystem::path emb = stem;
  emb += ".emb";
  const EmbeddingTable table = load_embeddings(emb);
  const auto dim = meta.at("dim").get<std::size_t>();
  const auto r = meta.at("bottleneck").get<std::size_t>();
  if (table.dim() != dim) throw Error(ErrorCode::ShapeMismatch, "checkpoint dim mismatch");
  return {get_adapter(table, "student", r, meta.at("student_scale").get<double>()),
          get_adapter(table, "teacher", r, meta.at("teacher_scale").get<double>())};
}

void write_history(std::span<const TrainStep> history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "iteration,loss,n_pseudo\n";
  char buf[64];
  for (const auto& step : history) {
    std::snprintf(buf, sizeof buf, "%.9g", step.loss);
    out << step.iteration << ',' << buf << ',' << step.n_pseudo << '\n';
  }
}

}  // namespace tlsa
