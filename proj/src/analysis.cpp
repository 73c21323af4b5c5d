#include "appgen/analysis.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace appgen {

std::map<int, Eigen::VectorXd> hourly_profiles(const Dataset& data, PopularityDomain key, std::int64_t tz) {
  std::map<int, Eigen::VectorXd> out;
  for (const auto& seq : data)
    for (const auto& e : seq.events) {
      int id = e.app_id;
      if (key == PopularityDomain::category) {
        if (!e.category_id) throw Error("missing-category", "record of user " + e.user_id + " has no category");
        id = *e.category_id;
      }
      auto& v = out[id];
      if (v.size() == 0) v = Eigen::VectorXd::Zero(24);
      v[hour_of_day(e.timestamp, tz)] += 1.0;
    }
  for (auto& [id, v] : out) v /= v.sum();
  return out;
}

Eigen::VectorXd app_hourly_profile(const Dataset& data, int app, std::int64_t tz) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(24);
  for (const auto& seq : data)
    for (const auto& e : seq.events)
      if (e.app_id == app) v[hour_of_day(e.timestamp, tz)] += 1.0;
  if (v.sum() > 0.0) v /= v.sum();
  return v;
}

std::vector<std::vector<int>> sessionize(const Dataset& data, std::int64_t gap_seconds) {
  std::vector<std::vector<int>> out;
  for (const auto& seq : data) {
    std::set<int> current;
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
      if (i > 0 && seq.events[i].timestamp - seq.events[i - 1].timestamp > gap_seconds) {
        out.emplace_back(current.begin(), current.end());
        current.clear();
      }
      current.insert(seq.events[i].app_id);
    }
    if (!current.empty()) out.emplace_back(current.begin(), current.end());
  }
  return out;
}

namespace {

bool contains_all(const std::vector<int>& transaction, const std::vector<int>& items) {
  return std::includes(transaction.begin(), transaction.end(), items.begin(), items.end());
}

}  // namespace

ItemsetTable apriori(const std::vector<std::vector<int>>& transactions, double min_support, int max_size) {
  if (transactions.empty()) throw Error("empty-input", "Apriori needs at least one transaction");
  if (!(min_support > 0.0 && min_support <= 1.0)) throw Error("invalid-argument", "min_support must lie in (0, 1]");
  std::vector<std::vector<int>> tx;
  for (const auto& t : transactions) {
    std::vector<int> s = t;
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    tx.push_back(std::move(s));
  }
  const double n = static_cast<double>(tx.size());
  // tolerate rounding in min_support * n
  const double min_count = min_support * n - 1e-9;

  std::map<std::vector<int>, double> frequent;
  std::vector<std::vector<int>> level;
  {
    std::map<int, int> counts;
    for (const auto& t : tx)
      for (int item : t) ++counts[item];
    for (const auto& [item, c] : counts)
      if (c >= min_count) {
        level.push_back({item});
        frequent[{item}] = c / n;
      }
  }
  for (int size = 2; size <= max_size && !level.empty(); ++size) {
    // join itemsets sharing their first size-2 items, prune by downward closure
    std::set<std::vector<int>> prev(level.begin(), level.end());
    std::vector<std::vector<int>> candidates;
    for (std::size_t a = 0; a < level.size(); ++a)
      for (std::size_t b = a + 1; b < level.size(); ++b) {
        if (!std::equal(level[a].begin(), level[a].end() - 1, level[b].begin())) continue;
        std::vector<int> cand = level[a];
        cand.push_back(level[b].back());
        std::sort(cand.begin(), cand.end());
        bool ok = true;
        for (std::size_t drop = 0; drop < cand.size() && ok; ++drop) {
          std::vector<int> sub = cand;
          sub.erase(sub.begin() + static_cast<std::ptrdiff_t>(drop));
          ok = prev.count(sub) > 0;
        }
        if (ok) candidates.push_back(std::move(cand));
      }
    level.clear();
    for (const auto& cand : candidates) {
      int c = 0;
      for (const auto& t : tx) c += contains_all(t, cand);
      if (c >= min_count) {
        frequent[cand] = c / n;
        level.push_back(cand);
      }
    }
    std::sort(level.begin(), level.end());
  }

  ItemsetTable table;
  for (const auto& [items, support] : frequent) {
    table.itemsets.push_back({items, support});
    if (items.size() < 2) continue;
    for (std::size_t c = 0; c < items.size(); ++c) {
      AssociationRule r;
      r.antecedent = items;
      r.antecedent.erase(r.antecedent.begin() + static_cast<std::ptrdiff_t>(c));
      r.consequent = items[c];
      r.support = support;
      r.confidence = support / frequent.at(r.antecedent);
      table.rules.push_back(std::move(r));
    }
  }
  std::stable_sort(table.itemsets.begin(), table.itemsets.end(),
                   [](const Itemset& a, const Itemset& b) { return a.support > b.support; });
  std::sort(table.rules.begin(), table.rules.end(), [](const AssociationRule& a, const AssociationRule& b) {
    if (a.support != b.support) return a.support > b.support;
    if (a.antecedent != b.antecedent) return a.antecedent < b.antecedent;
    return a.consequent < b.consequent;
  });
  return table;
}

int rule_rank(const ItemsetTable& table, const std::vector<int>& antecedent, int consequent) {
  const double s = rule_support(table, antecedent, consequent);
  if (s == 0.0) return 0;
  int higher = 0;
  for (const auto& r : table.rules) higher += r.support > s;
  return higher + 1;
}

double rule_support(const ItemsetTable& table, const std::vector<int>& antecedent, int consequent) {
  std::vector<int> a = antecedent;
  std::sort(a.begin(), a.end());
  for (const auto& r : table.rules)
    if (r.antecedent == a && r.consequent == consequent) return r.support;
  return 0.0;
}

ItemsetAgreement itemset_agreement(const ItemsetTable& real, const ItemsetTable& generated, int top_m) {
  if (top_m < 1) throw Error("invalid-argument", "top_m must be >= 1");
  auto top = [&](const ItemsetTable& t) {
    std::vector<AssociationRule> out(t.rules.begin(), t.rules.begin() + std::min<std::size_t>(t.rules.size(), top_m));
    for (auto& r : out) r.support = r.confidence = 0.0;  // compare by identity only
    return out;
  };
  const auto r = top(real);
  const auto g = top(generated);
  ItemsetAgreement out;
  if (r.empty() && g.empty()) return {1.0, 1.0};
  std::vector<double> rank_r, rank_g;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const auto it = std::find(g.begin(), g.end(), r[i]);
    if (it == g.end()) continue;
    rank_r.push_back(static_cast<double>(i));
    rank_g.push_back(static_cast<double>(it - g.begin()));
  }
  out.overlap = static_cast<double>(rank_r.size()) / static_cast<double>(std::max(r.size(), g.size()));
  if (rank_r.size() == 1)
    out.rank_correlation = 1.0;
  else if (rank_r.size() > 1)
    out.rank_correlation = spearmanr(Eigen::Map<const Eigen::VectorXd>(rank_r.data(), rank_r.size()),
                                     Eigen::Map<const Eigen::VectorXd>(rank_g.data(), rank_g.size()));
  return out;
}

namespace {

KMeansResult lloyd(const Eigen::MatrixXd& x, Eigen::MatrixXd centers, int max_iterations) {
  const Eigen::Index n = x.cols();
  const Eigen::Index k = centers.cols();
  KMeansResult r;
  r.labels.assign(n, -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best;
      (centers.colwise() - x.col(i)).colwise().squaredNorm().minCoeff(&best);
      if (r.labels[i] != best) {
        r.labels[i] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(x.rows(), k);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(r.labels[i]) += x.col(i);
      counts[r.labels[i]] += 1.0;
    }
    for (Eigen::Index c = 0; c < k; ++c)
      if (counts[c] > 0) centers.col(c) = sums.col(c) / counts[c];
  }
  r.centers = std::move(centers);
  r.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) r.inertia += (x.col(i) - r.centers.col(r.labels[i])).squaredNorm();
  return r;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts, int max_iterations) {
  const Eigen::Index n = points.cols();
  if (k < 1) throw Error("invalid-argument", "k must be >= 1");
  if (k > n) throw Error("invalid-argument", "k = " + std::to_string(k) + " exceeds the " + std::to_string(n) + " points");
  if (restarts < 1) throw Error("invalid-argument", "restarts must be >= 1");
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int run = 0; run < restarts; ++run) {
    Eigen::MatrixXd centers(points.rows(), k);
    centers.col(0) = points.col(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
    Eigen::VectorXd d2 = (points.colwise() - centers.col(0)).colwise().squaredNorm().transpose();
    for (int c = 1; c < k; ++c) {
      Eigen::Index pick;
      if (d2.sum() <= 0.0) {
        pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
      } else {
        std::discrete_distribution<Eigen::Index> dist(d2.data(), d2.data() + n);
        pick = dist(rng);
      }
      centers.col(c) = points.col(pick);
      d2 = d2.cwiseMin((points.colwise() - centers.col(c)).colwise().squaredNorm().transpose());
    }
    auto r = lloyd(points, std::move(centers), max_iterations);
    if (r.inertia < best.inertia - 1e-12) best = std::move(r);
  }
  return best;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw Error("shape-mismatch", "partitions label different numbers of points");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<int, int>, double> cells;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cells[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto pairs = [](double m) { return m * (m - 1.0) / 2.0; };
  double index = 0, sum_rows = 0, sum_cols = 0;
  for (const auto& [_, c] : cells) index += pairs(c);
  for (const auto& [_, c] : rows) sum_rows += pairs(c);
  for (const auto& [_, c] : cols) sum_cols += pairs(c);
  const double expected = sum_rows * sum_cols / pairs(n);
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;  // both partitions trivial in the same way
  return (index - expected) / (max_index - expected);
}

Eigen::MatrixXd location_representation(const Dataset& data, int num_stations, int num_apps, std::int64_t tz) {
  Eigen::MatrixXd rep = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kTimeBlocks) * num_apps, num_stations);
  for (const auto& seq : data)
    for (const auto& e : seq.events) {
      if (e.location_id < 0 || e.location_id >= num_stations)
        throw Error("invalid-argument", "station " + std::to_string(e.location_id) + " outside the station set");
      if (e.app_id < 0 || e.app_id >= num_apps) throw Error("invalid-argument", "app id outside the universe");
      const int block = hour_of_day(e.timestamp, tz) / (24 / kTimeBlocks);
      rep(block * num_apps + e.app_id, e.location_id) += 1.0;
    }
  for (Eigen::Index s = 0; s < rep.cols(); ++s) {
    const double total = rep.col(s).sum();
    if (total > 0.0) rep.col(s) /= total;
  }
  return rep;
}

double location_cluster_agreement(const Dataset& real, const Dataset& generated, int num_stations, int num_apps,
                                  int k_clusters, std::uint64_t seed, std::int64_t tz) {
  if (k_clusters > num_stations)
    throw Error("invalid-argument", "k_clusters = " + std::to_string(k_clusters) + " exceeds the " +
                                        std::to_string(num_stations) + " stations");
  const auto r = kmeans(location_representation(real, num_stations, num_apps, tz), k_clusters, seed);
  const auto g = kmeans(location_representation(generated, num_stations, num_apps, tz), k_clusters, seed);
  return adjusted_rand_index(r.labels, g.labels);
}

namespace {

std::vector<int> order_by_count(const Eigen::VectorXd& counts) {
  std::vector<int> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return counts[a] > counts[b]; });
  return order;
}

void check_apps(const Dataset& data, int num_apps) {
  for (const auto& seq : data)
    for (const auto& e : seq.events)
      if (e.app_id < 0 || e.app_id >= num_apps) throw Error("invalid-argument", "app id outside the universe");
}

}  // namespace

void FrequencyPredictor::fit(const Dataset& data) {
  check_apps(data, num_apps_);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(num_apps_);
  for (const auto& seq : data)
    for (const auto& e : seq.events) counts[e.app_id] += 1.0;
  order_ = order_by_count(counts);
}

std::vector<int> FrequencyPredictor::rank(const std::vector<int>&) const { return order_; }

void MarkovPredictor::fit(const Dataset& data) {
  check_apps(data, num_apps_);
  counts_ = Eigen::MatrixXd::Ones(num_apps_, num_apps_);
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(num_apps_);
  for (const auto& seq : data)
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
      freq[seq.events[i].app_id] += 1.0;
      if (i > 0) counts_(seq.events[i - 1].app_id, seq.events[i].app_id) += 1.0;
    }
  fallback_ = order_by_count(freq);
}

std::vector<int> MarkovPredictor::rank(const std::vector<int>& prefix) const {
  if (prefix.empty()) return fallback_;
  const int last = prefix.back();
  if (last < 0 || last >= num_apps_) throw Error("invalid-argument", "app id outside the universe");
  return order_by_count(counts_.row(last).transpose());
}

std::vector<RankingScores> evaluate_predictor(const NextAppPredictor& predictor, const Dataset& test, int num_apps,
                                              const std::vector<int>& k_values) {
  std::vector<std::vector<int>> predictions;
  std::vector<int> truth;
  for (const auto& seq : test) {
    std::vector<int> prefix;
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
      if (i > 0) {
        auto ranking = predictor.rank(prefix);
        std::vector<int> check = ranking;
        std::sort(check.begin(), check.end());
        bool full = static_cast<int>(check.size()) == num_apps;
        for (int a = 0; full && a < num_apps; ++a) full = check[a] == a;
        if (!full) throw Error("incomplete-ranking", predictor.name() + " did not rank every app exactly once");
        predictions.push_back(std::move(ranking));
        truth.push_back(seq.events[i].app_id);
      }
      prefix.push_back(seq.events[i].app_id);
    }
  }
  return ranking_metrics(predictions, truth, k_values);
}

const DownstreamRow& DownstreamReport::row(const std::string& experiment, const std::string& predictor) const {
  for (const auto& r : rows)
    if (r.experiment == experiment && r.predictor == predictor) return r;
  throw Error("missing-metric", "no downstream row for " + experiment + "/" + predictor);
}

DownstreamReport downstream_protocol(const Dataset& real, const GeneratorFn& generator,
                                     const std::vector<NextAppPredictor*>& predictors, int num_apps,
                                     std::uint64_t seed, const std::vector<int>& k_values) {
  auto [a, a_prime] = split_users(real, 0.5, seed);
  auto [b, b_prime] = generator(a, a_prime);
  Dataset a_plus_b = a;
  a_plus_b.insert(a_plus_b.end(), b.begin(), b.end());

  DownstreamReport report;
  report.users_a = user_ids(a);
  report.users_a_prime = user_ids(a_prime);
  report.exp1_train_events = count_events(a);
  report.exp3_train_events = count_events(a_plus_b);
  report.exp1_test_users = user_ids(a_prime);
  report.exp3_test_users = user_ids(a_prime);

  const std::vector<std::tuple<std::string, const Dataset*, const Dataset*>> experiments = {
      {"exp1", &a, &a_prime}, {"exp2", &b, &b_prime}, {"exp3", &a_plus_b, &a_prime}};
  for (const auto& [name, train_set, test_set] : experiments)
    for (auto* p : predictors) {
      p->fit(*train_set);
      report.rows.push_back({name, p->name(), evaluate_predictor(*p, *test_set, num_apps, k_values)});
    }
  return report;
}

void write_profile(const std::filesystem::path& path, const Eigen::VectorXd& shares, const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) throw Error("io-error", "cannot write " + path.string());
  out.precision(10);
  if (!config_hash.empty()) out << "#config_hash:" << config_hash << "\n";
  out << "hour\tshare\n";
  for (Eigen::Index h = 0; h < shares.size(); ++h) out << h << "\t" << shares[h] << "\n";
}

void write_itemset_table(const std::filesystem::path& path, const ItemsetTable& table, int top_m,
                         const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) throw Error("io-error", "cannot write " + path.string());
  out.precision(10);
  if (!config_hash.empty()) out << "#config_hash:" << config_hash << "\n";
  out << "rank\tantecedent\tconsequent\tsupport\tconfidence\n";
  for (std::size_t i = 0; i < table.rules.size() && static_cast<int>(i) < top_m; ++i) {
    const auto& r = table.rules[i];
    out << i + 1 << "\t";
    for (std::size_t k = 0; k < r.antecedent.size(); ++k) out << (k ? "," : "") << r.antecedent[k];
    out << "\t" << r.consequent << "\t" << r.support << "\t" << r.confidence << "\n";
  }
}

}  // namespace appgen
