#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "appgen/corpus.hpp"
#include "appgen/diffusion.hpp"
#include "appgen/encoders.hpp"
#include "appgen/history.hpp"

namespace appgen {

/// Which conditioning pathway is zeroed.
enum class AblationVariant { full, no_spatial, no_history, no_current_context };

std::string to_string(AblationVariant variant);
AblationVariant ablation_from_string(const std::string& name);

struct ModelConfig {
  int window = 16;
  int attn_dim = 64;
  int value_dim = 64;
  int diffusion_steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.2;
  double lambda_alpha = 0.8;
  int channels = 16;
  int blocks = 8;
  int step_hidden = 64;
  double learning_rate = 1e-3;
  /// Cosine decay of the learning rate over the epochs down to this fraction.
  double final_lr_fraction = 1.0;
  int batch_size = 128;
  int epochs = 30;
  std::uint64_t seed = 42;
  std::int64_t tz_offset_seconds = 0;
  AblationVariant variant = AblationVariant::full;
  /// Center the app table and put every app at the same norm before it
  /// becomes the diffusion target space.
  bool standardize_apps = true;

  /// Throws Error("invalid-config") naming the offending field.
  void validate() const;
};

struct TrainingMetadata {
  int best_epoch = 0;   // 0 = the initial parameters
  int epochs_run = 0;
  std::uint64_t seed = 0;
  std::vector<double> train_loss;       // index e: mean loss of epoch e (0 = before training)
  std::vector<double> validation_loss;  // same indexing
};

/// Everything generation needs, plus provenance.
struct ModelCheckpoint {
  ModelConfig config;
  std::string config_text;  // run configuration this model came from
  std::uint64_t config_hash = 0;
  EmbeddingTable apps;
  EmbeddingTable locations;
  std::vector<int> app_category;  // optional app -> category map
  AttentionParams attention;
  DenoiserParams denoiser;
  NoiseSchedule schedule;
  TrainingMetadata metadata;
};

/// Mean-centered copy of `table` with every app rescaled to norm sqrt(dim),
/// i.e. mean squared component 1. Cosine decoding then separates apps that
/// raw skip-gram vectors crowd into one direction, and no app sits closer to
/// the table mean than the others.
EmbeddingTable standardize_table(const EmbeddingTable& table);

/// Per-epoch progress hook.
using EpochCallback = std::function<void(int epoch, double train_loss, double validation_loss)>;

/// Teacher-forced training of attention + denoiser over every position of
/// every sequence, with frozen embedding tables. Returns the parameters of the
/// epoch with the lowest validation loss (training loss if `validation` is
/// empty).
ModelCheckpoint train(const Dataset& train_split, const Dataset& validation, const EmbeddingTable& apps,
                      const EmbeddingTable& locations, const ModelConfig& config, const EpochCallback& on_epoch = {});

/// Condition tensors fed to the denoiser for one position.
struct Condition {
  Eigen::VectorXd history;  // value_dim + 1 (empty-window flag last)
  Eigen::VectorXd context;  // temporal encoding + location embedding
};

/// What generation read and fed at each position (1-based index i at [i-1]).
struct GenerationTrace {
  std::vector<AccessLog> window_reads;
  std::vector<std::vector<int>> context_reads;
  std::vector<Condition> conditions;
};

/// Autoregressive sampling for one trajectory: window from previously
/// generated apps, full reverse chain from Gaussian noise, cosine decoding.
std::vector<int> generate_sequence(const ModelCheckpoint& ckpt, const Trajectory& trajectory, AblationVariant variant,
                                   std::uint64_t seed, GenerationTrace* trace = nullptr);

/// Seed used for sequence `index` of a corpus generated with `seed`.
std::uint64_t sequence_seed(std::uint64_t seed, std::size_t index);

/// Replaces the apps of every sequence of `conditions` with generated ones;
/// sequences are sampled in lockstep batches, each with its own random stream,
/// so the result equals per-sequence generate_sequence calls.
Dataset generate_corpus(const ModelCheckpoint& ckpt, const Dataset& conditions, AblationVariant variant,
                        std::uint64_t seed);

/// Binary checkpoint with magic, version, embedded config and a trailing
/// checksum.
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace appgen
