// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "support/table15.hpp"
#include "tlsa/align.hpp"
#include "tlsa/pipeline.hpp"
#include "tlsa/refine.hpp"
#include "tlsa/selftrain.hpp"

using namespace tlsa;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<float> random_unit(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(dim);
  double n = 0.0;
  for (auto& x : v) {
    x = g(rng);
    n += x * x;
  }
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] / std::sqrt(n));
  return out;
}

std::vector<double> as_double(std::span<const float> row) { return {row.begin(), row.end()}; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome threshold_oracle() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> kd(2, 7);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = kd(rng);
    std::vector<double> row(k + trial % 3);
    for (auto& v : row) v = u(rng);
    std::vector<std::string> names;
    for (std::size_t j = 0; j < row.size(); ++j) names.push_back("l" + std::to_string(j));

    std::vector<std::size_t> order(row.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return row[a] > row[b]; });
    std::vector<double> top;
    for (std::size_t r = 0; r < k; ++r) top.push_back(row[order[r]]);
    const auto expect = oracle::thresholds(top);

    const auto gap = gap_threshold(top);
    const double avg = avg_threshold(top);
    const auto set = build_prediction_set(row, names, k);
    bool ok = gap.index == expect.j && gap.tau_gap == expect.tau_gap && avg == expect.tau_avg &&
              set.tau_gap == expect.tau_gap && set.tau_avg == expect.tau_avg &&
              set.tau_set == expect.tau_set && set.entries.size() == expect.set.size();
    for (std::size_t i = 0; ok && i < expect.set.size(); ++i) {
      ok = set.entries[i].column == order[expect.set[i]];
    }
    if (!ok) ++mismatches;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream d;
  d << "1000 vectors, k in 2..7, " << mismatches << " mismatches, " << secs << " s";
  return {mismatches == 0 && secs < 5.0, d.str()};
}

Outcome algorithm_equivalence() {
  std::mt19937_64 rng(77);
  std::size_t mismatches = 0;
  std::size_t samples = 0;
  std::size_t private_verdicts = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = std::uniform_int_distribution<std::size_t>(2, 16)(rng);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(0, 50)(rng);
    const std::size_t ns = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    const std::size_t nr = std::uniform_int_distribution<std::size_t>(ns == 1 ? 1 : 0, 8)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(2, 7)(rng);

    oracle::AlignmentInput in;
    in.k = k;
    EmbeddingTable labels(d);
    LabelSet source(LabelKind::Source);
    for (std::size_t j = 0; j < ns; ++j) {
      const std::string name = "source " + std::to_string(j);
      labels.add_row(name, random_unit(d, rng));
      source.insert(name);
      in.source_names.push_back(name);
      in.source_vectors.push_back(as_double(labels.row(j)));
    }
    for (std::size_t j = 0; j < nr; ++j) {
      const std::string name = "found " + std::to_string(j);
      labels.add_row(name, random_unit(d, rng));
      in.discovered_names.push_back(name);
      in.discovered_vectors.push_back(as_double(labels.row(ns + j)));
    }
    labels.mark_normalized();

    EmbeddingTable images(d);
    std::uniform_int_distribution<int> rpick(-2, static_cast<int>(nr) - 1);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string id = "img " + std::to_string(i);
      images.add_row(id, random_unit(d, rng));
      in.sample_ids.push_back(id);
      in.images.push_back(as_double(images.row(i)));
      const int r = rpick(rng);
      if (r >= 0) in.r[id] = in.discovered_names[static_cast<std::size_t>(r)];
      else if (r == -1) in.r[id] = "unseen label";
    }
    images.mark_normalized();

    AlignOptions opt;
    opt.k = k;
    opt.batch_size = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
    const auto got = run_alignment(images, labels, source, in.r, opt);
    const auto want = oracle::semantic_label_alignment(in);

    for (std::size_t i = 0; i < n; ++i) {
      std::string v = "skip";
      if (const auto* s = std::get_if<Shared>(&got.verdicts[i])) v = "shared:" + s->label;
      if (const auto* p = std::get_if<Private>(&got.verdicts[i])) {
        v = "private:" + p->label;
        ++private_verdicts;
      }
      if (v != want.verdicts[i]) ++mismatches;
      ++samples;
    }
    if (got.bank.counts() != want.bank) ++mismatches;
  }
  std::ostringstream d;
  d << "200 trials, " << samples << " samples (" << private_verdicts << " private), " << mismatches
    << " mismatches";
  return {mismatches == 0, d.str()};
}

Outcome end_to_end_recovery() {
  std::size_t recovered = 0;
  std::ostringstream failures;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto fx = testing::make_fixture({.seed = seed});
    const auto dir = testing::scratch_dir("accept_e2e_" + std::to_string(seed));
    Pipeline p(load_config(fx.write(dir)));
    const auto r = p.run();
    const auto cp = load_label_set(dir / "out" / artifacts::kPrivateLabels, LabelKind::PrivatePredicted);
    const bool same = std::set<std::string>(cp.begin(), cp.end()) == fx.expected_private;
    if (same && r.h_score == 1.0) {
      ++recovered;
    } else {
      failures << " seed " << seed << " (h=" << r.h_score << ", |C_p|=" << cp.size() << ")";
    }
  }
  std::ostringstream d;
  d << recovered << "/20 seeds recover C_p exactly with h_score == 1.0" << failures.str();
  return {recovered == 20, d.str()};
}

Outcome refine_properties() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::uint64_t> count(1, 5000);
  std::uniform_int_distribution<int> size(1, 20);
  std::uniform_real_distribution<double> eps(0.001, 0.5);
  std::uniform_int_distribution<std::uint64_t> scale(2, 50);
  const LabelSet source(LabelKind::Source, {"c0", "c1", "c2", "c3"});
  std::size_t violations = 0;
  for (int trial = 0; trial < 500; ++trial) {
    FrequencyBank bank;
    for (int i = 0, n = size(rng); i < n; ++i) bank.add("c" + std::to_string(i), count(rng));
    double e1 = eps(rng);
    double e2 = eps(rng);
    if (e1 > e2) std::swap(e1, e2);
    const auto lo = frequency_filter(bank, source, {e1});
    const auto hi = frequency_filter(bank, source, {e2});
    for (const auto& l : hi.private_labels) violations += !lo.private_labels.contains(l);
    for (const auto& l : lo.private_labels) violations += source.contains(l);
    FrequencyBank scaled;
    const auto m = scale(rng);
    for (const auto& [l, c] : bank.counts()) scaled.add(l, c * m);
    violations += frequency_filter(scaled, source, {e1}).private_labels.labels() != lo.private_labels.labels();
  }

  // Reconstructed bank: every listed row is a predicted private label.
  FrequencyBank table;
  for (const auto& [l, c] : testing::visda_private_bank()) table.add(l, c);
  const LabelSet visda_source(LabelKind::Source, {"aeroplane", "bicycle", "bus", "car", "horse", "knife"});
  const auto full = frequency_filter(table, visda_source, {0.01});
  const bool table_ok = full.private_labels.size() == testing::visda_private_bank().size();

  FrequencyBank with_source = table;
  with_source.add("aeroplane", 4000);
  const auto spec = frequency_filter(with_source, visda_source, {0.01});
  const bool spec_ok = spec.tau_freq == 40.0 && spec.private_labels.size() == 15;

  FrequencyBank heavy = table;
  heavy.add("car", 8100);
  const auto flip = frequency_filter(heavy, visda_source, {0.01});
  const bool flip_ok = !flip.private_labels.contains("fire hydrant") && flip.private_labels.size() == 14;

  std::ostringstream d;
  d << "500 banks, " << violations << " property violations; table bank tau=" << full.tau_freq << " keeps "
    << full.private_labels.size() << "/15; with aeroplane=4000 tau=" << spec.tau_freq << " keeps "
    << spec.private_labels.size() << "/15; max(F)=8100 drops fire hydrant: " << (flip_ok ? "yes" : "no");
  return {violations == 0 && table_ok && spec_ok && flip_ok, d.str()};
}

Outcome gradient_check() {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g(0.0, 0.5);
  std::size_t instances = 0;
  std::size_t resampled = 0;
  double worst = 0.0;
  while (instances < 50) {
    const std::size_t d = 8;
    const std::size_t r = 2;
    const std::size_t labels = 3 + instances % 5;
    EmbeddingTable src(d);
    for (std::size_t j = 0; j < labels; ++j) src.add_row("l" + std::to_string(j), random_unit(d, rng));
    src.mark_normalized();
    const auto clf = UniversalClassifier::build(src, EmbeddingTable(d));
    const FrozenHead head(clf);

    AdapterParams a = AdapterParams::zeros(d, r);
    for (Eigen::Index i = 0; i < a.down.size(); ++i) a.down.data()[i] = g(rng);
    for (Eigen::Index i = 0; i < a.up.size(); ++i) a.up.data()[i] = g(rng);
    a.scale = 0.5 + std::abs(g(rng));
    std::vector<Eigen::VectorXd> xs;
    std::vector<Eigen::VectorXd> qs;
    for (int n = 0; n < 6; ++n) {
      const auto v = random_unit(d, rng);
      xs.push_back(Eigen::Map<const Eigen::VectorXf>(v.data(), static_cast<Eigen::Index>(d)).cast<double>());
      Eigen::VectorXd q(static_cast<Eigen::Index>(labels));
      for (Eigen::Index c = 0; c < q.size(); ++c) q(c) = std::abs(g(rng)) + 1e-3;
      qs.push_back(q / q.sum());
    }
    if (oracle::min_abs_preactivation(a, xs) < 1e-3) {
      ++resampled;
      continue;
    }
    const double temperature = instances % 2 ? kDefaultTemperature : 1.0;
    const auto lg = loss_and_grad(a, head, xs, qs, temperature);
    const auto fd = oracle::numeric_gradient(a, head.weights(), xs, qs, temperature,
                                             temperature < 0.1 ? 1e-7 : 1e-6);
    double norm = std::max({lg.grad.down.cwiseAbs().maxCoeff(), lg.grad.up.cwiseAbs().maxCoeff(),
                            std::abs(lg.grad.scale)});
    auto rel = [&](double x, double y) {
      return std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-6 * norm});
    };
    for (Eigen::Index i = 0; i < a.down.size(); ++i) worst = std::max(worst, rel(lg.grad.down.data()[i], fd.down.data()[i]));
    for (Eigen::Index i = 0; i < a.up.size(); ++i) worst = std::max(worst, rel(lg.grad.up.data()[i], fd.up.data()[i]));
    worst = std::max(worst, rel(lg.grad.scale, fd.scale));
    ++instances;
  }
  std::ostringstream d;
  d << "50 instances (d=8, r=2, T in {1, 0.01}), worst relative error " << worst << ", " << resampled
    << " resampled near a ReLU kink";
  return {worst < 1e-4, d.str()};
}

Outcome ema_and_frozen() {
  const auto fx = testing::make_fixture({.seed = 3, .min_cluster = 40, .max_cluster = 60});
  const auto src = select_rows(fx.label_embeddings, fx.source.labels());
  const std::vector<std::string> prv(fx.expected_private.begin(), fx.expected_private.end());
  const auto clf = UniversalClassifier::build(src, select_rows(fx.label_embeddings, prv));
  const std::vector<float> before = clf.weights().data();

  TrainConfig cfg;
  cfg.iterations = 200;
  cfg.batch_size = 64;
  cfg.bottleneck = 8;
  cfg.lr = 0.05;
  cfg.ema_alpha = 0.9;
  cfg.teacher_update_period = 5;
  std::size_t updates = 0;
  double worst = 0.0;
  TrainHooks hooks;
  hooks.on_teacher_update = [&](const AdapterParams& t0, const AdapterParams& s, const AdapterParams& t1) {
    ++updates;
    auto check = [&](const Eigen::MatrixXd& a0, const Eigen::MatrixXd& st, const Eigen::MatrixXd& a1) {
      // |t' - s| = alpha |t - s| elementwise, up to rounding on the parameter scale.
      const Eigen::ArrayXXd lhs = (a1 - st).array().abs();
      const Eigen::ArrayXXd rhs = cfg.ema_alpha * (a0 - st).array().abs();
      const double magnitude = std::max({1.0, a0.cwiseAbs().maxCoeff(), st.cwiseAbs().maxCoeff()});
      worst = std::max(worst, (lhs - rhs).abs().maxCoeff() / magnitude);
    };
    check(t0.down, s.down, t1.down);
    check(t0.up, s.up, t1.up);
  };
  std::size_t zero_shot_mismatch = 0;
  const auto zero_shot = predict_all(clf, fx.images);
  hooks.on_pseudo_labels = [&](std::size_t it, const PseudoLabelSet& set) {
    if (it != 0) return;
    for (const auto& e : set.entries) {
      const std::size_t row = *fx.images.find(e.sample_id);
      const auto p = predict(clf, fx.images.row(row));
      zero_shot_mismatch += p.label_index != e.class_index;
    }
  };
  const auto result = train(fx.images, clf, cfg, hooks);
  const bool frozen = clf.weights().data().size() == before.size() &&
                      std::memcmp(clf.weights().data().data(), before.data(), before.size() * sizeof(float)) == 0;

  TrainConfig none = cfg;
  none.iterations = 0;
  const auto init = train(fx.images, clf, none);
  const auto adapted = predict_adapted(init.student, clf, fx.images);
  for (std::size_t i = 0; i < adapted.size(); ++i) {
    zero_shot_mismatch += adapted[i].class_index != zero_shot[i].class_index ||
                          adapted[i].label != zero_shot[i].label;
  }
  std::ostringstream d;
  d << result.history.size() << " iterations, " << updates << " EMA updates, worst contraction error "
    << worst << "; classifier bit-identical: " << (frozen ? "yes" : "no")
    << "; zero-init vs zero-shot mismatches: " << zero_shot_mismatch;
  return {result.history.size() == 200 && updates == 40 && worst < 1e-12 && frozen && zero_shot_mismatch == 0,
          d.str()};
}

Outcome metric_oracles() {
  std::size_t bad = 0;
  bad += h_score(1.0, 1.0) != 1.0;
  bad += h_score(0.8, 0.0) != 0.0;
  bad += std::abs(h_score(0.6, 0.3) - 0.4) > 1e-12;
  bad += h3_score(1, 1, 1) != 1.0;
  bad += h3_score(0.0, 0.7, 0.9) != 0.0;
  bad += std::abs(h3_score(0.6, 0.6, 0.6) - 0.6) > 1e-12;
  const std::vector<int> t{0, 0, 1, 1, 2, 2};
  const std::vector<int> single(6, 0);
  bad += std::abs(nmi(t, t) - 1.0) > 1e-12;
  bad += nmi(single, t) != 0.0;
  const std::vector<int> truth6{0, 0, 0, 1, 1, 1};
  const std::vector<int> pred6{0, 0, 1, 1, 2, 2};
  bad += std::abs(nmi(pred6, truth6) - oracle::nmi(pred6, truth6)) > 1e-12;
  bad += std::abs(nmi(pred6, truth6) - 0.5158037429793889) > 1e-12;

  std::mt19937_64 rng(12);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> a(0, 1 + trial % 6);
    std::uniform_int_distribution<int> b(0, 1 + (trial / 6) % 5);
    std::vector<int> p(12);
    std::vector<int> q(12);
    for (auto& x : p) x = a(rng);
    for (auto& x : q) x = b(rng);
    worst = std::max(worst, std::abs(nmi(p, q) - oracle::nmi(p, q)));
  }
  std::ostringstream d;
  d << bad << " worked-example mismatches; 100 random 12-sample partitions, worst |diff| " << worst;
  return {bad == 0 && worst < 1e-9, d.str()};
}

double h_with_rule(const testing::Fixture& fx, ThresholdRule rule) {
  auto captions = fx.captions;
  vote_records(captions);
  const auto disc = collect_discovered(captions);
  std::istringstream syn(fx.synonyms);
  const auto db = read_synonym_db(syn);
  const auto aligned = synonym_align(db, disc.labels, fx.source);
  std::vector<std::string> order = fx.source.labels();
  order.insert(order.end(), aligned.kept.begin(), aligned.kept.end());
  AlignOptions opt;
  opt.rule = rule;
  const auto res = run_alignment(fx.images, select_rows(fx.label_embeddings, order), fx.source,
                                 disc.per_sample, opt);
  const auto refined = frequency_filter(res.bank, fx.source, {}, &db);
  const auto clf = UniversalClassifier::build(select_rows(fx.label_embeddings, fx.source.labels()),
                                              select_rows(fx.label_embeddings, refined.private_labels.labels()));
  return evaluate(predict_all(clf, fx.images), fx.truth, fx.split).h_score;
}

Outcome ablation() {
  std::size_t ok = 0;
  double sum_min = 0;
  double sum_gap = 0;
  double sum_avg = 0;
  const int seeds = 5;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto fx = testing::make_fixture({.seed = static_cast<std::uint64_t>(seed), .hard_cases = true});
    const double m = h_with_rule(fx, ThresholdRule::Min);
    const double g = h_with_rule(fx, ThresholdRule::GapOnly);
    const double a = h_with_rule(fx, ThresholdRule::AvgOnly);
    sum_min += m;
    sum_gap += g;
    sum_avg += a;
    ok += m >= g && m >= a;
  }
  std::ostringstream d;
  d << ok << "/" << seeds << " seeds with min >= both; mean H: min " << sum_min / seeds << ", gap-only "
    << sum_gap / seeds << ", avg-only " << sum_avg / seeds;
  return {ok == static_cast<std::size_t>(seeds), d.str()};
}

Outcome determinism() {
  const auto fx = testing::make_fixture({.seed = 9, .min_cluster = 60, .max_cluster = 80});
  const std::string extra = "[selftrain]\nenabled = true\niterations = 30\nbatch_size = 32\nbottleneck = 8\n";
  std::vector<fs::path> dirs;
  for (const char* name : {"accept_det_a", "accept_det_b"}) {
    const auto dir = testing::scratch_dir(name);
    const auto cfg = fx.write(dir, extra);
    const std::string cmd = std::string(TLSA_CLI_PATH) + " run --config " + cfg.string() + " > " +
                            (dir / "stdout.json").string() + " 2> " + (dir / "stderr.log").string();
    const int raw = std::system(cmd.c_str());
    if (!WIFEXITED(raw) || WEXITSTATUS(raw) != 0) return {false, "run exited abnormally in " + dir.string()};
    dirs.push_back(dir);
  }
  std::size_t differ = 0;
  std::size_t compared = 0;
  for (auto name : {artifacts::kPrivateLabels, artifacts::kPredictions, artifacts::kMetrics,
                    artifacts::kSelfTrainPredictions, artifacts::kSelfTrainMetrics, artifacts::kBank}) {
    const auto a = slurp(dirs[0] / "out" / name);
    const auto b = slurp(dirs[1] / "out" / name);
    differ += a.empty() || a != b;
    ++compared;
  }
  differ += slurp(dirs[0] / "stdout.json") != slurp(dirs[1] / "stdout.json");
  std::ostringstream d;
  d << "two CLI runs, " << compared << " artifacts plus stdout compared, " << differ << " differ";
  return {differ == 0, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"threshold oracle", threshold_oracle},
      {"alignment equivalence", algorithm_equivalence},
      {"synthetic end-to-end recovery", end_to_end_recovery},
      {"frequency filter properties", refine_properties},
      {"gradient check", gradient_check},
      {"EMA contraction and frozen classifier", ema_and_frozen},
      {"metric oracles", metric_oracles},
      {"threshold ablation ordering", ablation},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failed += !o.pass;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
