#pragma once

#include "mnode/data.hpp"
#include "mnode/sphere.hpp"
#include "mnode/trainer.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mnode {

/// Where the train and test splits come from.
struct DatasetSpec {
  std::string kind = "blobs";  // idx | series | blobs | circles
  // idx
  std::string train_images, train_labels, test_images, test_labels;
  std::optional<std::size_t> train_limit, test_limit;
  // series
  std::string train_path, test_path;
  std::string delimiter = "auto";  // auto | tab | comma | space | any single character
  // synthetic
  Index n = 400;
  Index d = 10;
  int classes = 2;
  double spread = 0.3;
  double noise = 0.1;
  std::uint64_t seed = 1;
  double train_fraction = 0.8;
};

/// Everything one CLI command needs. Every field has a default, and
/// to_json() writes the fully resolved document.
struct RunConfig {
  DatasetSpec dataset;
  TrainConfig trainer = TrainConfig::for_images();
  double graph_threshold = 0.5;
  SphereConfig sphere;
  std::vector<Index> sensitivity_dims{3, 10, 20, 50, 100};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string output_dir = "runs/latest";
};

/// Strict parse: unknown keys and wrongly typed values raise ConfigError
/// naming the dotted key. Trainer defaults follow the dataset kind (series
/// runs default to 30 epochs and a 16-wide field).
RunConfig parse_run_config(const nlohmann::json& doc);
nlohmann::json to_json(const RunConfig& cfg);

/// "a.b.c=value". The value is parsed as JSON when possible, else taken as a
/// string. Intermediate objects are created as needed.
void apply_override(nlohmann::json& doc, std::string_view assignment);

nlohmann::json load_json_file(const std::filesystem::path& path);

/// Train and test splits. IDX features are min-max scaled with train-split
/// statistics; synthetic data is split with dataset.seed.
std::pair<Dataset, Dataset> load_datasets(const DatasetSpec& spec);

}  // namespace mnode
