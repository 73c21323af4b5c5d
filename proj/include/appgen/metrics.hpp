#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iosfwd>
#include <numeric>
#include <string>
#include <vector>

#include "appgen/common.hpp"
#include "appgen/corpus.hpp"

namespace appgen {

// ---------------------------------------------------------------------------
// Popularity distributions
// ---------------------------------------------------------------------------

enum class PopularityDomain { app, category };
std::string to_string(PopularityDomain domain);

/// Per-user average daily occurrence counts: column u holds user u's counts
/// divided by the number of days that user was active.
struct UserActivity {
  PopularityDomain domain = PopularityDomain::app;
  std::vector<std::string> users;  // sorted
  Eigen::MatrixXd daily;           // ids x users
};

UserActivity user_activity(const Dataset& data, int num_ids, PopularityDomain domain = PopularityDomain::app,
                           std::int64_t tz_offset_seconds = 0);

struct PopularityDistribution {
  PopularityDomain domain = PopularityDomain::app;
  Eigen::VectorXd probs;  // id -> proportion of average daily occurrences per user
};

/// Proportion of average daily occurrences per user, over ids 0..num_ids-1.
/// Throws Error("empty-data") for an empty dataset and
/// Error("missing-category") when a category is requested but absent.
PopularityDistribution popularity(const Dataset& data, int num_ids, PopularityDomain domain = PopularityDomain::app,
                                  std::int64_t tz_offset_seconds = 0);
PopularityDistribution popularity(const UserActivity& activity);

/// Each user's own popularity distribution (columns sum to 1).
Eigen::MatrixXd user_popularity(const UserActivity& activity);

// ---------------------------------------------------------------------------
// Pairwise metrics
// ---------------------------------------------------------------------------

namespace detail {
template <class A, class B>
void check_same_size(const Eigen::MatrixBase<A>& p, const Eigen::MatrixBase<B>& q) {
  if (p.size() != q.size()) throw Error("shape-mismatch", "metric arguments differ in size");
  if (p.size() == 0) throw Error("empty-input", "metric arguments are empty");
}

template <class A>
void check_distribution(const Eigen::MatrixBase<A>& p) {
  if ((p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > 1e-6)
    throw Error("invalid-distribution", "argument is not a probability distribution");
}

inline double xlogx_over(double a, double b) { return a > 0.0 ? a * std::log(a / b) : 0.0; }
}  // namespace detail

template <class A, class B>
double rmse(const Eigen::MatrixBase<A>& p, const Eigen::MatrixBase<B>& q) {
  detail::check_same_size(p, q);
  return std::sqrt((p.derived().array() - q.derived().array()).square().mean());
}

template <class A, class B>
double mae(const Eigen::MatrixBase<A>& p, const Eigen::MatrixBase<B>& q) {
  detail::check_same_size(p, q);
  return (p.derived().array() - q.derived().array()).abs().mean();
}

/// Jensen-Shannon divergence with natural log, bounded by ln 2.
template <class A, class B>
double jsd(const Eigen::MatrixBase<A>& p, const Eigen::MatrixBase<B>& q) {
  detail::check_same_size(p, q);
  detail::check_distribution(p);
  detail::check_distribution(q);
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p(i) + q(i));
    total += 0.5 * detail::xlogx_over(p(i), m) + 0.5 * detail::xlogx_over(q(i), m);
  }
  return std::max(0.0, total);
}

/// Marginal total variation: half the L1 distance.
template <class A, class B>
double m_tv(const Eigen::MatrixBase<A>& p, const Eigen::MatrixBase<B>& q) {
  detail::check_same_size(p, q);
  return 0.5 * (p.derived().array() - q.derived().array()).abs().sum();
}

/// Average (1-based) ranks; ties share the mean of their positions.
template <class A>
Eigen::VectorXd average_ranks(const Eigen::MatrixBase<A>& x) {
  const Eigen::Index n = x.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x(a) < x(b); });
  Eigen::VectorXd ranks(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && x(order[j + 1]) == x(order[i])) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Pearson correlation of average ranks; 0 when either side is constant.
template <class A, class B>
double spearmanr(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
  detail::check_same_size(x, y);
  const Eigen::VectorXd rx = average_ranks(x);
  const Eigen::VectorXd ry = average_ranks(y);
  const Eigen::VectorXd dx = rx.array() - rx.mean();
  const Eigen::VectorXd dy = ry.array() - ry.mean();
  const double den = std::sqrt(dx.squaredNorm() * dy.squaredNorm());
  if (den == 0.0) return 0.0;
  return std::clamp(dx.dot(dy) / den, -1.0, 1.0);
}

/// Exact CRPS of the empirical step CDF of `samples` at observation x:
/// integral of (F(z) - 1{x <= z})^2 dz = E|X - x| - E|X - X'| / 2.
template <class A>
double crps(const Eigen::MatrixBase<A>& samples, double x) {
  const Eigen::Index n = samples.size();
  if (n == 0) throw Error("empty-input", "CRPS needs at least one sample");
  std::vector<double> s(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) s[i] = samples(i);
  std::sort(s.begin(), s.end());
  double to_obs = 0.0, pair = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    to_obs += std::abs(s[i] - x);
    pair += (2.0 * static_cast<double>(i + 1) - static_cast<double>(n) - 1.0) * s[i];
  }
  const double nn = static_cast<double>(n);
  return to_obs / nn - pair / (nn * nn);
}

// ---------------------------------------------------------------------------
// Ranking metrics for next-app prediction
// ---------------------------------------------------------------------------

struct RankingScores {
  int k = 1;
  double accuracy = 0.0;  // hit rate of the truth within the top k
  double mrr = 0.0;
  double ndcg = 0.0;
  double recall = 0.0;    // hit rate averaged over truth classes
  double f1 = 0.0;        // harmonic mean of accuracy and recall
};

/// `predictions[e]` is the ranked app list for event e (best first).
std::vector<RankingScores> ranking_metrics(const std::vector<std::vector<int>>& predictions,
                                           const std::vector<int>& truth, const std::vector<int>& k_values = {1, 5, 10});

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

struct MetricEntry {
  std::string metric;
  std::string domain;
  double value = 0.0;
};

struct EvalReport {
  std::string config_hash;
  std::vector<MetricEntry> entries;

  /// Throws Error("missing-metric") when absent.
  double value(const std::string& metric, const std::string& domain) const;
};

/// RMSE, MAE, JSD and M-TV on percent-scaled popularity, CRPS per id on
/// per-user percent popularity against the real value (averaged over ids),
/// Spearman on the raw popularity vectors.
std::vector<MetricEntry> compare_popularity(const UserActivity& real, const UserActivity& generated);

/// `metric \t domain \t value` per line after a `#config_hash:` header.
void write_metric_table(std::ostream& out, const EvalReport& report);
void write_metric_table(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_metric_table(const std::filesystem::path& path);

}  // namespace appgen
