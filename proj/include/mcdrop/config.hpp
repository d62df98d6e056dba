#pragma once

#include "mcdrop/dataset.hpp"
#include "mcdrop/model.hpp"
#include "mcdrop/train.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mcdrop {

/// Invalid configuration value or key; reported as a usage error.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DatasetConfig {
  std::string kind = "blobs";  // blobs | textures | csv | idx
  Index n = 5000;
  Index classes = 4;
  double overlap = 0.4;
  Index dim = 2;
  double noise = 0.5;
  Index size = 16;
  std::string path;  // csv
  std::string label_column = "label";
  std::string images;  // idx
  std::string labels;  // idx
  std::optional<std::uint64_t> seed;  // defaults to the run seed
  double train = 0.8, val = 0.1, test = 0.1;
};

struct ModelConfig {
  Variant variant = Variant::bayesian1;
  Backbone backbone = Backbone::mlp;
  double dropout = 0.5;
  Index width = 256;
};

struct UncertaintyConfig {
  Index passes = 100;  // T
  Index draws = 0;     // S
  unsigned threads = 1;
};

struct RunConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig training;
  UncertaintyConfig uncertainty;
  std::uint64_t seed = 0;
  std::string out = "out";
};

/// Sets one "section.key" entry from text. Throws ConfigError on an unknown
/// key or an unparsable value.
void set_option(RunConfig& cfg, std::string_view key, std::string_view value);

/// Flat "key = value" lines under [section] headers; '#' starts a comment.
/// Entries are applied on top of `base`.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Canonical text form of every setting that affects results. The output
/// directory and thread count are omitted: neither changes any artifact.
std::string serialize_config(const RunConfig& cfg);

/// Range checks, e.g. overlap in [0, 1] and T >= 2.
void validate(const RunConfig& cfg);

std::uint64_t dataset_seed(const RunConfig& cfg);
Dataset make_dataset(const RunConfig& cfg);
Splits make_splits(const RunConfig& cfg);

ArchitectureOptions architecture(const RunConfig& cfg);
EvalConfig eval_config(const RunConfig& cfg);

}  // namespace mcdrop
