#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "inspectlab/corpus.hpp"
#include "inspectlab/experiment.hpp"

namespace inspectlab::evaluate {

/// Everything a run needs. Seeds: corpus seed = derive_seed(master, "corpus") unless the
/// config pins corpus.seed; experiment seeds = seeds_from_master(master); the FID sample
/// seed = derive_seed(master, "fid"). Per-fold and per-cell streams are derived from those.
struct RunConfig {
  std::string preset = "smoke";
  std::uint64_t master_seed = 0;
  std::filesystem::path output_root;
  int workers = 1;
  corpus::CorpusSpec corpus;
  /// Existing corpus; when empty the corpus is generated under output_root/corpus.
  std::filesystem::path corpus_manifest;
  GridSpec grid;
  TrainingConfigs training;
  /// Classes trained by `gan train`.
  std::vector<LabelClass> gan_classes{corpus::kAllClasses.begin(), corpus::kAllClasses.end()};
  /// The merged document this config was parsed from.
  nlohmann::json document;

  Seeds seeds() const { return seeds_from_master(master_seed); }
};

/// Full JSON document of a preset ("smoke" or "paper"); it doubles as the key schema.
nlohmann::json preset_json(std::string_view name);

/// The preset named by the document's "preset" field (default smoke, or `preset_override`)
/// with the document merged over it. Unknown keys and ill-typed values raise Error(config)
/// naming the key path.
RunConfig run_config_from_json(const nlohmann::json& doc, std::optional<std::string> preset_override = {});
RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::string> preset_override = {});

/// Canonical document: merged config plus the derived seeds.
nlohmann::json to_json(const RunConfig& c);

/// "baseline_mlp" (augmentation none) or "baseline_mlp:smote".
GridRow parse_grid_row(std::string_view text);
std::string format_grid_row(const GridRow& row);

}  // namespace inspectlab::evaluate
