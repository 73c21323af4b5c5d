#pragma once

#include <Eigen/Dense>
#include <random>
#include <span>
#include <vector>

#include "appgen/corpus.hpp"
#include "appgen/encoders.hpp"

namespace appgen {

/// Lookup of the three latent tables used to featurize sequence points.
struct FeatureTables {
  const EmbeddingTable* apps = nullptr;
  const EmbeddingTable* locations = nullptr;
  std::int64_t tz_offset_seconds = 0;

  int feature_dim() const { return kTemporalDim + locations->dim() + apps->dim(); }
  int context_dim() const { return kTemporalDim + locations->dim(); }

  /// h = [t || l || a]; the spatial block is zeroed when `mask_spatial`.
  Eigen::VectorXd point_features(const TrajectoryPoint& point, int app, bool mask_spatial = false) const;
  /// c = [t || l] of the current point.
  Eigen::VectorXd context_features(const TrajectoryPoint& point, bool mask_spatial = false) const;
};

/// Records which 1-based positions were read while building windows.
struct AccessLog {
  std::vector<int> point_reads;
  std::vector<int> app_reads;
};

/// Past points max(1, i-k) .. i-1 of position i (1-based), featurized.
struct HistoryWindow {
  int position = 1;
  int size_limit = 0;
  std::vector<int> indices;   // 1-based, ascending
  Eigen::MatrixXd features;   // feature_dim x indices.size()

  bool empty() const { return indices.empty(); }
  int size() const { return static_cast<int>(indices.size()); }
};

/// Builds the masked sliding window for position `position`. `apps` holds the
/// apps already produced for positions 1..position-1 (generated ones during
/// sampling); nothing at or after `position` is read from it.
HistoryWindow build_window(const Trajectory& trajectory, std::span<const int> apps, int position, int k,
                           const FeatureTables& tables, bool mask_spatial = false, AccessLog* log = nullptr);

/// W_q, W_k, W_v of the single-head scaled dot-product attention.
struct AttentionParams {
  Eigen::MatrixXd query;  // attn_dim x feature_dim
  Eigen::MatrixXd key;    // attn_dim x feature_dim
  Eigen::MatrixXd value;  // value_dim x feature_dim

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f(self.query);
    f(self.key);
    f(self.value);
  }

  int feature_dim() const { return static_cast<int>(query.cols()); }
  int attn_dim() const { return static_cast<int>(query.rows()); }
  int value_dim() const { return static_cast<int>(value.rows()); }
};

AttentionParams make_attention_params(int feature_dim, int attn_dim, int value_dim, std::mt19937_64& rng);

struct AttentionResult {
  Eigen::VectorXd output;   // value_dim; zero for an empty window
  Eigen::VectorXd weights;  // softmax weights, one per window point
  // cached for the backward pass
  Eigen::VectorXd query;
  Eigen::MatrixXd keys;
  Eigen::MatrixXd values;
};

/// Query from the most recent point, keys/values from every window point:
/// output = sum_p softmax(q.k_p / sqrt(d))_p * v_p.
AttentionResult encode_history(const HistoryWindow& window, const AttentionParams& params);

/// Accumulates d loss / d params into `grad` given d loss / d output.
void attention_backward(const HistoryWindow& window, const AttentionParams& params, const AttentionResult& forward,
                        const Eigen::VectorXd& d_output, AttentionParams& grad);

}  // namespace appgen
