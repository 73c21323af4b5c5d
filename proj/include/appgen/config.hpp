#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "appgen/corpus.hpp"
#include "appgen/encoders.hpp"
#include "appgen/orchestrator.hpp"

namespace appgen {

struct AnalysisOptions {
  int k_clusters = 5;
  double min_support = 0.01;
  int top_m = 20;
  bool downstream = false;
};

/// Everything one run needs. Keys are flat with section prefixes
/// ("world.users", "diffusion.steps", ...); every key has a default.
struct RunConfig {
  std::uint64_t seed = 42;
  WorldSpec world;
  std::array<double, 3> split{0.7, 0.1, 0.2};
  SkipGramOptions skipgram;
  TuckerOptions tucker;
  ModelConfig model;
  AnalysisOptions analysis;
  std::filesystem::path run_dir = "run";

  RunConfig();

  /// Sub-seeds of the stages, derived from `seed`.
  WorldSpec world_spec() const;
  SkipGramOptions skipgram_options() const;
  TuckerOptions tucker_options() const;
  ModelConfig model_config() const;
  std::uint64_t split_seed() const;
  std::uint64_t generate_seed() const;
  std::uint64_t analysis_seed() const;

  /// Throws Error("invalid-config") naming the offending key.
  void validate() const;
};

/// Sets one key. Throws Error("unknown-key") or Error("invalid-config").
void set_key(RunConfig& config, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

/// `key = value` lines; `#` starts a comment.
void apply_config_text(RunConfig& config, std::istream& in, const std::string& origin = "config");
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// Sorted `key=value` lines of every key that affects artifacts (paths are
/// left out, so the same run in another directory hashes the same).
std::string canonical_text(const RunConfig& config);
std::string config_hash(const RunConfig& config);

}  // namespace appgen
