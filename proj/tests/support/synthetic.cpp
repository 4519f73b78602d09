#include "synthetic.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include <Eigen/Dense>
#include <json.hpp>

namespace tlsa::testing {

namespace {

class Geometry {
 public:
  Geometry(std::size_t dim, std::mt19937_64& rng) : dim_(dim) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    basis_ = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
  }

  Eigen::VectorXd direction() {
    if (next_ >= dim_) throw std::runtime_error("fixture ran out of orthogonal directions");
    return basis_.col(static_cast<Eigen::Index>(next_++));
  }

 private:
  std::size_t dim_;
  std::size_t next_ = 0;
  Eigen::MatrixXd basis_;
};

std::vector<float> to_floats(const Eigen::VectorXd& v) {
  std::vector<float> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
  return out;
}

}  // namespace

Fixture make_fixture(const FixtureSpec& spec) {
  std::mt19937_64 rng(spec.seed * 7919 + 17);
  std::normal_distribution<double> gauss(0.0, spec.noise);
  std::uniform_int_distribution<std::size_t> size_dist(spec.min_cluster, spec.max_cluster);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Geometry geo(spec.dim, rng);

  Fixture fx;
  fx.split.n_shared = static_cast<int>(spec.shared.size());
  fx.split.n_source_private = static_cast<int>(spec.source_private.size());
  fx.split.n_target_private = static_cast<int>(spec.target_private.size());
  fx.split.setting = spec.source_private.empty() ? SplitSetting::ODA : SplitSetting::OPDA;
  for (const auto& l : spec.shared) fx.source.insert(l);
  for (const auto& l : spec.source_private) fx.source.insert(l);
  fx.expected_private.insert(spec.target_private.begin(), spec.target_private.end());

  std::map<std::string, Eigen::VectorXd> centroid;
  for (const auto& l : fx.source) centroid[l] = geo.direction();
  for (const auto& l : spec.target_private) centroid[l] = geo.direction();
  for (const auto& l : spec.noise_labels) centroid[l] = geo.direction();

  fx.label_embeddings = EmbeddingTable(spec.dim);
  auto add_label = [&](const std::string& label, const Eigen::VectorXd& v) {
    fx.label_embeddings.add_row(label, to_floats(v.normalized()));
  };
  for (const auto& [label, v] : centroid) add_label(label, v);
  if (centroid.contains("laptop")) add_label("laptop computer", centroid["laptop"]);

  // Hard-case geometry: "bag" sits 60 degrees off "backpack"; the screen-like
  // labels share a direction orthogonal to "monitor".
  Eigen::VectorXd bag_dir;
  Eigen::VectorXd screen_dir;
  const std::vector<std::string> screen_labels{"screen", "display", "flat panel"};
  if (centroid.contains("backpack")) {
    bag_dir = geo.direction();
    const double phi = spec.hard_cases ? M_PI / 3.0 : M_PI / 4.0;
    add_label("bag", std::cos(phi) * centroid["backpack"] + std::sin(phi) * bag_dir);
  }
  if (spec.hard_cases && centroid.contains("monitor")) {
    screen_dir = geo.direction();
    for (const auto& l : screen_labels) add_label(l, screen_dir + 0.15 * geo.direction());
  }
  fx.label_embeddings.mark_normalized();

  std::string syn =
      "# synset groups\n"
      "laptop|laptop_computer|notebook_computer\n"
      "backpack|back_pack|knapsack|packsack|rucksack|haversack\n"
      "bag\n"
      "monitor|monitoring_device\n"
      "screen|CRT_screen\n"
      "display|display_panel|display_board\n"
      "mug|stein|beer_mug\n"
      "pen\n"
      "bike|bicycle|cycle\n"
      "calculator|calculating_machine\n"
      "printer|printing_machine\n"
      "stapler|stapling_machine\n"
      "trash_can|garbage_can|wastebin|ash_bin|dustbin|trash_barrel|trash_bin\n"
      "dog|domestic_dog|Canis_familiaris\n"
      "pizza|pizza_pie\n"
      "umbrella\n";
  fx.synonyms = syn;

  fx.images = EmbeddingTable(spec.dim);
  std::size_t sample_no = 0;
  auto add_sample = [&](const Eigen::VectorXd& centre, const std::string& true_label, bool is_private,
                        std::vector<std::string> answers) {
    Eigen::VectorXd x = centre;
    for (Eigen::Index d = 0; d < x.size(); ++d) x(d) += gauss(rng);
    char id[32];
    std::snprintf(id, sizeof id, "img_%05zu", sample_no++);
    fx.images.add_row(id, to_floats(x.normalized()));
    DiscoveredLabelRecord rec;
    rec.sample_id = id;
    for (std::size_t p = 0; p < answers.size(); ++p) {
      rec.responses.push_back({static_cast<int>(p), answers[p]});
    }
    fx.captions.push_back(std::move(rec));
    fx.truth.push_back({id, true_label, is_private});
  };

  // Two of five answers are distractors: a casing/article variant, an
  // over-specific description, a list, or a WordNet synonym.
  auto answers_for = [&](const std::string& label) {
    std::vector<std::string> a{label, label, label};
    for (int extra = 0; extra < 2; ++extra) {
      const double u = unit(rng);
      if (u < 0.25) a.push_back("The " + label);
      else if (u < 0.5) a.push_back("a small grey " + label + " on a wooden desk");
      else if (u < 0.75) a.push_back(label + ", desk");
      else a.push_back(label == "laptop" ? "notebook computer" : label == "trash can" ? "garbage can" : "object");
    }
    std::shuffle(a.begin(), a.end(), rng);
    return a;
  };

  std::vector<std::string> clusters = spec.shared;
  clusters.insert(clusters.end(), spec.target_private.begin(), spec.target_private.end());
  std::size_t noise_cursor = 0;
  for (const auto& label : clusters) {
    const bool is_private = fx.expected_private.contains(label);
    const std::size_t n = size_dist(rng);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::string> answers;
      if (label == "laptop" && i % 3 == 0) {
        answers = answers_for("laptop computer");  // removed at the synonym step
      } else if (label == "backpack" && i % 4 == 0) {
        answers = answers_for("bag");
      } else if (is_private && i == 0 && noise_cursor < spec.noise_labels.size()) {
        answers = answers_for(spec.noise_labels[noise_cursor++]);
      } else if (is_private && i == 1) {
        answers = {"a tall beige office machine with paper", "many objects, on a desk"};
      } else {
        answers = answers_for(label);
      }
      add_sample(centroid[label], label, is_private, answers);
    }
  }
  if (spec.hard_cases) {
    const double theta = M_PI / 3.0;
    for (std::size_t i = 0; i < spec.hard_per_case; ++i) {
      add_sample(std::cos(theta) * centroid["backpack"] + std::sin(theta) * bag_dir, "backpack",
                 false, answers_for("bag"));
    }
    for (std::size_t i = 0; i < spec.hard_per_case; ++i) {
      add_sample(0.55 * centroid["monitor"] + 0.835 * screen_dir, "monitor", false,
                 answers_for(screen_labels[i % screen_labels.size()]));
    }
  }
  fx.images.mark_normalized();
  return fx;
}

std::filesystem::path Fixture::write(const std::filesystem::path& dir,
                                     const std::string& extra_config) const {
  std::filesystem::create_directories(dir);
  write_embeddings(images, dir / "images.emb");
  write_embeddings(label_embeddings, dir / "labels.emb");
  write_label_set(source, dir / "source.txt");
  {
    std::ofstream out(dir / "synonyms.syn");
    out << synonyms;
  }
  {
    std::ofstream out(dir / "captions.jsonl");
    for (const auto& rec : captions) {
      nlohmann::ordered_json j;
      j["sample_id"] = rec.sample_id;
      j["responses"] = nlohmann::json::array();
      for (const auto& r : rec.responses) {
        j["responses"].push_back({{"prompt", r.prompt_index}, {"answer", r.answer}});
      }
      out << j.dump() << '\n';
    }
  }
  {
    std::ofstream out(dir / "truth.jsonl");
    for (const auto& t : truth) {
      nlohmann::ordered_json j;
      j["sample_id"] = t.sample_id;
      j["true_label"] = t.true_label;
      j["is_private"] = t.is_private;
      out << j.dump() << '\n';
    }
  }
  const auto config = dir / "config.toml";
  std::ofstream out(config);
  out << "images = \"images.emb\"\n"
      << "label_embeddings = \"labels.emb\"\n"
      << "captions = \"captions.jsonl\"\n"
      << "synonyms = \"synonyms.syn\"\n"
      << "source_labels = \"source.txt\"\n"
      << "truth = \"truth.jsonl\"\n"
      << "output_dir = \"out\"\n"
      << "k = 5\nepsilon = 0.01\nbatch_size = 128\nseed = 0\n"
      << extra_config << "\n"
      << "[split]\n"
      << "setting = \"" << to_string(split.setting) << "\"\n"
      << "n_source_private = " << split.n_source_private << "\n"
      << "n_shared = " << split.n_shared << "\n"
      << "n_target_private = " << split.n_target_private << "\n";
  return config;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tlsa_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace tlsa::testing
