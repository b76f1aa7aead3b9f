#ifndef POCUS_CONFIG_HPP
#define POCUS_CONFIG_HPP

#include <string>

#include "pocus/backbone.hpp"
#include "pocus/dataset.hpp"
#include "pocus/model.hpp"
#include "pocus/preprocess.hpp"
#include "pocus/trainer.hpp"

namespace pocus {

// Merged run settings. Defaults here are the documented ones; a config file
// overrides defaults and CLI flags override the file.
struct RunConfig {
  std::string manifest_path;
  std::string video_root;
  std::string work_dir = "work";
  ManifestSchema schema = ManifestSchema::default_schema();
  SplitSpec split;
  bool split_counts_from_config = false;  // a config file pinned explicit counts
  PreprocessConfig preprocess;
  ModelConfig model;  // feature_dim is resolved from the backbone at build time
  BackboneSpec backbone;
  TrainConfig train;
};

// Strict parse of a JSON config file: unknown keys anywhere are an error.
RunConfig load_run_config(const std::string& path);

}  // namespace pocus

#endif  // POCUS_CONFIG_HPP
