#include "appgen/history.hpp"

#include <algorithm>
#include <cmath>

#include "appgen/common.hpp"
#include "appgen/optim.hpp"

namespace appgen {

Eigen::VectorXd FeatureTables::point_features(const TrajectoryPoint& point, int app, bool mask_spatial) const {
  Eigen::VectorXd h(feature_dim());
  h.head(context_dim()) = context_features(point, mask_spatial);
  h.tail(apps->dim()) = apps->row(app);
  return h;
}

Eigen::VectorXd FeatureTables::context_features(const TrajectoryPoint& point, bool mask_spatial) const {
  Eigen::VectorXd c(context_dim());
  c.head(kTemporalDim) = temporal_table().col(half_hour_bin(point.timestamp, tz_offset_seconds));
  if (mask_spatial)
    c.tail(locations->dim()).setZero();
  else
    c.tail(locations->dim()) = locations->row(point.location_id);
  return c;
}

HistoryWindow build_window(const Trajectory& trajectory, std::span<const int> apps, int position, int k,
                           const FeatureTables& tables, bool mask_spatial, AccessLog* log) {
  const int n = static_cast<int>(trajectory.size());
  if (position < 1 || position > n)
    throw Error("invalid-position", "position " + std::to_string(position) + " outside [1, " + std::to_string(n) + "]");
  if (k < 1) throw Error("invalid-argument", "window size must be >= 1");
  if (static_cast<int>(apps.size()) < position - 1)
    throw Error("invalid-argument", "app prefix shorter than position - 1");

  HistoryWindow w;
  w.position = position;
  w.size_limit = k;
  const int first = std::max(1, position - k);
  for (int j = first; j < position; ++j) w.indices.push_back(j);
  w.features.resize(tables.feature_dim(), static_cast<Eigen::Index>(w.indices.size()));
  for (std::size_t c = 0; c < w.indices.size(); ++c) {
    const int j = w.indices[c];
    if (log) {
      log->point_reads.push_back(j);
      log->app_reads.push_back(j);
    }
    w.features.col(static_cast<Eigen::Index>(c)) = tables.point_features(trajectory[j - 1], apps[j - 1], mask_spatial);
  }
  return w;
}

AttentionParams make_attention_params(int feature_dim, int attn_dim, int value_dim, std::mt19937_64& rng) {
  AttentionParams p{Eigen::MatrixXd(attn_dim, feature_dim), Eigen::MatrixXd(attn_dim, feature_dim),
                    Eigen::MatrixXd(value_dim, feature_dim)};
  fill_uniform(p, 1.0 / std::sqrt(static_cast<double>(feature_dim)), rng);
  return p;
}

AttentionResult encode_history(const HistoryWindow& window, const AttentionParams& params) {
  AttentionResult r;
  if (window.empty()) {
    r.output = Eigen::VectorXd::Zero(params.value_dim());
    return r;
  }
  if (window.features.rows() != params.feature_dim())
    throw Error("dimension-mismatch", "window features have dim " + std::to_string(window.features.rows()) +
                                          ", attention expects " + std::to_string(params.feature_dim()));
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.attn_dim()));
  r.query = params.query * window.features.col(window.features.cols() - 1);
  r.keys = params.key * window.features;
  r.values = params.value * window.features;
  Eigen::VectorXd scores = (r.keys.transpose() * r.query) * scale;
  scores.array() -= scores.maxCoeff();
  r.weights = scores.array().exp();
  r.weights /= r.weights.sum();
  r.output = r.values * r.weights;
  return r;
}

void attention_backward(const HistoryWindow& window, const AttentionParams& params, const AttentionResult& forward,
                        const Eigen::VectorXd& d_output, AttentionParams& grad) {
  if (window.empty()) return;
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.attn_dim()));
  const auto& h = window.features;
  const Eigen::VectorXd d_weights = forward.values.transpose() * d_output;
  const Eigen::VectorXd d_scores =
      forward.weights.cwiseProduct((d_weights.array() - forward.weights.dot(d_weights)).matrix()) * scale;
  grad.value.noalias() += d_output * (h * forward.weights).transpose();
  grad.key.noalias() += forward.query * (h * d_scores).transpose();
  grad.query.noalias() += (forward.keys * d_scores) * h.col(h.cols() - 1).transpose();
}

}  // namespace appgen
