#include "tlsa/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <variant>

#include "tlsa/error.hpp"
#include "tlsa/text.hpp"

namespace tlsa {

namespace {

using Value = std::variant<std::string, std::int64_t, double, bool>;

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

Value parse_value(std::string_view text, const std::string& where) {
  if (text.empty()) config_error(where + ": missing value");
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') config_error(where + ": unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < text.size(); ++i) {
      char c = text[i];
      if (c == '\\' && i + 2 < text.size()) {
        char n = text[++i];
        switch (n) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          default: out.push_back(n); break;
        }
      } else {
        out.push_back(c);
      }
    }
    return out;
  }
  if (text == "true") return true;
  if (text == "false") return false;
  std::int64_t integer = 0;
  auto [iend, ierr] = std::from_chars(text.data(), text.data() + text.size(), integer);
  if (ierr == std::errc() && iend == text.data() + text.size()) return integer;
  double real = 0.0;
  auto [dend, derr] = std::from_chars(text.data(), text.data() + text.size(), real);
  if (derr == std::errc() && dend == text.data() + text.size()) return real;
  config_error(where + ": cannot parse value '" + std::string(text) + "'");
}

std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

class Reader {
 public:
  Reader(std::string key, Value value) : key_(std::move(key)), value_(std::move(value)) {}

  std::string string() const {
    if (auto* s = std::get_if<std::string>(&value_)) return *s;
    config_error(key_ + " must be a string");
  }
  std::int64_t integer() const {
    if (auto* i = std::get_if<std::int64_t>(&value_)) return *i;
    config_error(key_ + " must be an integer");
  }
  std::size_t count() const {
    auto i = integer();
    if (i < 0) config_error(key_ + " must be nonnegative");
    return static_cast<std::size_t>(i);
  }
  double real() const {
    if (auto* d = std::get_if<double>(&value_)) return *d;
    if (auto* i = std::get_if<std::int64_t>(&value_)) return static_cast<double>(*i);
    config_error(key_ + " must be a number");
  }
  bool boolean() const {
    if (auto* b = std::get_if<bool>(&value_)) return *b;
    config_error(key_ + " must be true or false");
  }
  const Value& raw() const { return value_; }

 private:
  std::string key_;
  Value value_;
};

}  // namespace

PipelineConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
  PipelineConfig cfg;
  TrainConfig train;
  bool train_enabled = false;
  bool any_train_key = false;
  std::string section;
  std::set<std::string> seen;

  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "config line " + std::to_string(line_no);
    std::string_view body = trim(strip_comment(line));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') config_error(where + ": bad section header");
      section = std::string(trim(body.substr(1, body.size() - 2)));
      if (section != "split" && section != "selftrain") {
        config_error(where + ": unknown section [" + section + "]");
      }
      continue;
    }
    auto eq = body.find('=');
    if (eq == std::string_view::npos) config_error(where + ": expected key = value");
    const std::string key(trim(body.substr(0, eq)));
    const std::string full = section.empty() ? key : section + "." + key;
    if (!seen.insert(full).second) config_error(where + ": duplicate key " + full);
    const Reader v(full, parse_value(trim(body.substr(eq + 1)), where));

    if (section.empty()) {
      if (key == "images") cfg.paths.images = resolve(v.string());
      else if (key == "label_embeddings") cfg.paths.label_embeddings = resolve(v.string());
      else if (key == "captions") cfg.paths.captions = resolve(v.string());
      else if (key == "synonyms") cfg.paths.synonyms = resolve(v.string());
      else if (key == "source_labels") cfg.paths.source_labels = resolve(v.string());
      else if (key == "truth") cfg.paths.truth = resolve(v.string());
      else if (key == "output_dir") cfg.paths.output_dir = resolve(v.string());
      else if (key == "k") cfg.k = v.count();
      else if (key == "epsilon") cfg.epsilon = v.real();
      else if (key == "batch_size") cfg.batch_size = v.count();
      else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(v.count());
      else if (key == "temperature") cfg.temperature = v.real();
      else if (key == "max_prompts") cfg.max_prompts = v.count();
      else if (key == "max_answer_words") cfg.max_answer_words = v.count();
      else if (key == "audit") cfg.audit = v.boolean();
      else if (key == "write_probs") cfg.write_probs = v.boolean();
      else config_error(where + ": unknown key " + key);
    } else if (section == "split") {
      if (key == "setting") {
        try {
          cfg.split.setting = parse_split_setting(v.string());
        } catch (const Error& e) {
          config_error(where + ": " + e.detail());
        }
      } else if (key == "n_source_private") cfg.split.n_source_private = static_cast<int>(v.integer());
      else if (key == "n_shared") cfg.split.n_shared = static_cast<int>(v.integer());
      else if (key == "n_target_private") cfg.split.n_target_private = static_cast<int>(v.integer());
      else config_error(where + ": unknown key " + full);
    } else {
      any_train_key = true;
      if (key == "enabled") train_enabled = v.boolean();
      else if (key == "iterations") train.iterations = v.count();
      else if (key == "batch_size") train.batch_size = v.count();
      else if (key == "lr") train.lr = v.real();
      else if (key == "momentum") train.momentum = v.real();
      else if (key == "ema_alpha") train.ema_alpha = v.real();
      else if (key == "bottleneck") train.bottleneck = v.count();
      else if (key == "init_scale") train.init_scale = v.real();
      else if (key == "train_scale") train.train_scale = v.boolean();
      else if (key == "teacher_update_period") {
        if (const auto* s = std::get_if<std::string>(&v.raw())) {
          if (*s == "epoch") train.teacher_update_period = 0;
          else if (*s == "never") train.teacher_update_period = kNeverUpdateTeacher;
          else config_error(where + ": teacher_update_period must be an integer, \"epoch\" or \"never\"");
        } else {
          train.teacher_update_period = v.count();
        }
      } else config_error(where + ": unknown key " + full);
    }
  }
  if (any_train_key && train_enabled) cfg.selftrain = train;
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + path.string());
  return parse_config(in, path.parent_path());
}

void PipelineConfig::validate() const {
  if (k < 2) config_error("k must be at least 2");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) config_error("epsilon must be positive");
  if (batch_size == 0) config_error("batch_size must be positive");
  if (!(temperature > 0.0)) config_error("temperature must be positive");
  if (max_prompts == 0) config_error("max_prompts must be positive");
  if (paths.output_dir.empty()) config_error("output_dir is required");
  try {
    split.validate();
    if (selftrain) {
      TrainConfig t = *selftrain;
      t.temperature = temperature;
      t.validate();
    }
  } catch (const Error& e) {
    config_error(e.detail());
  }
}

}  // namespace tlsa
