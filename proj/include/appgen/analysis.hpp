#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "appgen/corpus.hpp"
#include "appgen/metrics.hpp"

namespace appgen {

// ---------------------------------------------------------------------------
// Hourly usage profiles
// ---------------------------------------------------------------------------

/// id -> 24 normalized hour-of-day shares, keyed by app or category. Ids with
/// no events are absent.
std::map<int, Eigen::VectorXd> hourly_profiles(const Dataset& data, PopularityDomain key = PopularityDomain::category,
                                               std::int64_t tz_offset_seconds = 0);

/// Hour-of-day shares of one app (all zero when it never occurs).
Eigen::VectorXd app_hourly_profile(const Dataset& data, int app, std::int64_t tz_offset_seconds = 0);

// ---------------------------------------------------------------------------
// Frequent itemsets
// ---------------------------------------------------------------------------

inline constexpr std::int64_t kSessionGapSeconds = 1800;

/// Splits every sequence at inactivity gaps longer than `gap_seconds`; each
/// session becomes the sorted set of its apps.
std::vector<std::vector<int>> sessionize(const Dataset& data, std::int64_t gap_seconds = kSessionGapSeconds);

struct Itemset {
  std::vector<int> items;  // sorted
  double support = 0.0;
};

/// Single-consequent association row; support is that of antecedent + consequent.
struct AssociationRule {
  std::vector<int> antecedent;  // sorted
  int consequent = 0;
  double support = 0.0;
  double confidence = 0.0;

  auto operator<=>(const AssociationRule&) const = default;
};

struct ItemsetTable {
  std::vector<Itemset> itemsets;       // support desc, then items asc
  std::vector<AssociationRule> rules;  // support desc, then (antecedent, consequent) asc
};

/// Level-wise Apriori: every itemset with support >= min_support (up to
/// `max_size` items) and the single-consequent rules they induce.
ItemsetTable apriori(const std::vector<std::vector<int>>& transactions, double min_support, int max_size = 4);

/// 1 + number of rules with strictly higher support; 0 when absent.
int rule_rank(const ItemsetTable& table, const std::vector<int>& antecedent, int consequent);
/// Support of a rule, 0 when absent.
double rule_support(const ItemsetTable& table, const std::vector<int>& antecedent, int consequent);

struct ItemsetAgreement {
  double overlap = 0.0;  // |common top-m rules| / max(top-m sizes)
  double rank_correlation = 0.0;  // Spearman over common rules' positions
};

ItemsetAgreement itemset_agreement(const ItemsetTable& real, const ItemsetTable& generated, int top_m);

// ---------------------------------------------------------------------------
// Location clustering
// ---------------------------------------------------------------------------

struct KMeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centers;  // dim x k
  double inertia = 0.0;
};

/// Seeded k-means++ with restarts; the lowest-inertia run wins.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts = 10, int max_iterations = 100);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

inline constexpr int kTimeBlocks = 4;  // six-hour blocks of the location time series

/// Station columns: app usage counts per (six-hour block, app), normalized to
/// shares per station.
Eigen::MatrixXd location_representation(const Dataset& data, int num_stations, int num_apps,
                                        std::int64_t tz_offset_seconds = 0);

/// ARI between k-means partitions of real and generated station representations.
double location_cluster_agreement(const Dataset& real, const Dataset& generated, int num_stations, int num_apps,
                                  int k_clusters, std::uint64_t seed, std::int64_t tz_offset_seconds = 0);

// ---------------------------------------------------------------------------
// Downstream next-app prediction
// ---------------------------------------------------------------------------

class NextAppPredictor {
 public:
  virtual ~NextAppPredictor() = default;
  virtual std::string name() const = 0;
  /// Replaces any previous fit.
  virtual void fit(const Dataset& data) = 0;
  /// Full ranking of every app for the event following `prefix`.
  virtual std::vector<int> rank(const std::vector<int>& prefix) const = 0;
};

/// Global app frequency, ties by smaller id.
class FrequencyPredictor : public NextAppPredictor {
 public:
  explicit FrequencyPredictor(int num_apps) : num_apps_(num_apps) {}
  std::string name() const override { return "frequency"; }
  void fit(const Dataset& data) override;
  std::vector<int> rank(const std::vector<int>& prefix) const override;

 private:
  int num_apps_;
  std::vector<int> order_;
};

/// First-order transition counts with add-one smoothing.
class MarkovPredictor : public NextAppPredictor {
 public:
  explicit MarkovPredictor(int num_apps) : num_apps_(num_apps) {}
  std::string name() const override { return "markov"; }
  void fit(const Dataset& data) override;
  std::vector<int> rank(const std::vector<int>& prefix) const override;

 private:
  int num_apps_;
  Eigen::MatrixXd counts_;  // from x to
  std::vector<int> fallback_;
};

/// Ranking metrics of a fitted predictor on every position i >= 2 of `test`.
std::vector<RankingScores> evaluate_predictor(const NextAppPredictor& predictor, const Dataset& test, int num_apps,
                                              const std::vector<int>& k_values = {1, 5, 10});

/// Trains a generator on the first dataset and returns synthetic corpora
/// conditioned on the trajectories of the first and second dataset.
using SyntheticPair = std::pair<Dataset, Dataset>;
using GeneratorFn = std::function<SyntheticPair(const Dataset& a, const Dataset& a_prime)>;

struct DownstreamRow {
  std::string experiment;  // exp1, exp2, exp3
  std::string predictor;
  std::vector<RankingScores> scores;
};

struct DownstreamReport {
  std::vector<DownstreamRow> rows;
  // protocol wiring, user ids per role
  std::vector<std::string> users_a, users_a_prime;
  std::size_t exp1_train_events = 0, exp3_train_events = 0;
  std::vector<std::string> exp1_test_users, exp3_test_users;

  const DownstreamRow& row(const std::string& experiment, const std::string& predictor) const;
};

/// Equal user halves A / A'; exp1 = fit A test A', exp2 = fit B test B',
/// exp3 = fit A + B test A'.
DownstreamReport downstream_protocol(const Dataset& real, const GeneratorFn& generator,
                                     const std::vector<NextAppPredictor*>& predictors, int num_apps,
                                     std::uint64_t seed, const std::vector<int>& k_values = {1, 5, 10});

// ---------------------------------------------------------------------------
// Plot-ready outputs
// ---------------------------------------------------------------------------

/// Tab-separated tables, preceded by a `#config_hash:` line when a hash is given.
void write_profile(const std::filesystem::path& path, const Eigen::VectorXd& shares, const std::string& config_hash = "");
void write_itemset_table(const std::filesystem::path& path, const ItemsetTable& table, int top_m,
                         const std::string& config_hash = "");

}  // namespace appgen
