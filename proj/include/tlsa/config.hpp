#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "tlsa/corpus.hpp"
#include "tlsa/selftrain.hpp"

namespace tlsa {

struct PipelinePaths {
  std::filesystem::path images;
  std::filesystem::path label_embeddings;
  std::filesystem::path captions;
  std::filesystem::path synonyms;
  std::filesystem::path source_labels;
  std::filesystem::path truth;
  std::filesystem::path output_dir;
};

struct PipelineConfig {
  PipelinePaths paths;
  std::size_t k = 5;
  double epsilon = 0.01;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  double temperature = kDefaultTemperature;
  std::size_t max_prompts = kDefaultPromptCount;
  std::size_t max_answer_words = 4;
  bool audit = false;
  bool write_probs = false;
  SplitConfig split;
  std::optional<TrainConfig> selftrain;

  /// Throws ConfigError.
  void validate() const;
};

/// Flat TOML subset: `key = value` lines, `[split]` and `[selftrain]`
/// sections, '#' comments, quoted strings, integers, floats and booleans.
/// Relative paths resolve against `base_dir`. The result is validated.
/// Throws ConfigError.
PipelineConfig parse_config(std::istream& in, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace tlsa
