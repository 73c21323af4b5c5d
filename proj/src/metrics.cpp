#include "appgen/metrics.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace appgen {

std::string to_string(PopularityDomain domain) {
  return domain == PopularityDomain::app ? "app" : "category";
}

UserActivity user_activity(const Dataset& data, int num_ids, PopularityDomain domain, std::int64_t tz) {
  if (count_events(data) == 0) throw Error("empty-data", "cannot compute popularity of an empty dataset");
  if (num_ids < 1) throw Error("invalid-argument", "id universe must be non-empty");
  std::map<std::string, std::pair<Eigen::VectorXd, std::set<std::int64_t>>> per_user;
  for (const auto& seq : data)
    for (const auto& e : seq.events) {
      int id = e.app_id;
      if (domain == PopularityDomain::category) {
        if (!e.category_id) throw Error("missing-category", "record of user " + e.user_id + " has no category");
        id = *e.category_id;
      }
      if (id < 0 || id >= num_ids)
        throw Error("invalid-argument", to_string(domain) + " id " + std::to_string(id) + " outside the universe");
      auto& [counts, days] = per_user[e.user_id];
      if (counts.size() == 0) counts = Eigen::VectorXd::Zero(num_ids);
      counts[id] += 1.0;
      days.insert(day_index(e.timestamp, tz));
    }
  UserActivity out;
  out.domain = domain;
  out.daily.resize(num_ids, static_cast<Eigen::Index>(per_user.size()));
  Eigen::Index u = 0;
  for (const auto& [user, entry] : per_user) {
    out.users.push_back(user);
    out.daily.col(u++) = entry.first / static_cast<double>(entry.second.size());
  }
  return out;
}

PopularityDistribution popularity(const UserActivity& activity) {
  PopularityDistribution p;
  p.domain = activity.domain;
  p.probs = activity.daily.rowwise().mean();
  p.probs /= p.probs.sum();
  return p;
}

PopularityDistribution popularity(const Dataset& data, int num_ids, PopularityDomain domain, std::int64_t tz) {
  return popularity(user_activity(data, num_ids, domain, tz));
}

Eigen::MatrixXd user_popularity(const UserActivity& activity) {
  Eigen::MatrixXd out = activity.daily;
  for (Eigen::Index u = 0; u < out.cols(); ++u) out.col(u) /= out.col(u).sum();
  return out;
}

std::vector<RankingScores> ranking_metrics(const std::vector<std::vector<int>>& predictions,
                                           const std::vector<int>& truth, const std::vector<int>& k_values) {
  if (predictions.size() != truth.size()) throw Error("shape-mismatch", "one ranked list per truth label expected");
  if (truth.empty()) throw Error("empty-input", "no events to score");
  std::vector<int> rank(truth.size(), 0);  // 0 = absent
  for (std::size_t e = 0; e < truth.size(); ++e) {
    const auto& list = predictions[e];
    const auto it = std::find(list.begin(), list.end(), truth[e]);
    if (it != list.end()) rank[e] = static_cast<int>(it - list.begin()) + 1;
  }
  std::vector<RankingScores> out;
  for (int k : k_values) {
    if (k < 1) throw Error("invalid-argument", "k must be >= 1");
    RankingScores s;
    s.k = k;
    std::map<int, std::pair<int, int>> per_class;  // truth -> (hits, total)
    for (std::size_t e = 0; e < truth.size(); ++e) {
      const bool hit = rank[e] >= 1 && rank[e] <= k;
      auto& [hits, total] = per_class[truth[e]];
      ++total;
      if (!hit) continue;
      ++hits;
      s.accuracy += 1.0;
      s.mrr += 1.0 / rank[e];
      s.ndcg += 1.0 / std::log2(rank[e] + 1.0);
    }
    const double n = static_cast<double>(truth.size());
    s.accuracy /= n;
    s.mrr /= n;
    s.ndcg /= n;
    for (const auto& [cls, ht] : per_class) s.recall += static_cast<double>(ht.first) / ht.second;
    s.recall /= static_cast<double>(per_class.size());
    s.f1 = s.accuracy + s.recall > 0.0 ? 2.0 * s.accuracy * s.recall / (s.accuracy + s.recall) : 0.0;
    out.push_back(s);
  }
  return out;
}

double EvalReport::value(const std::string& metric, const std::string& domain) const {
  for (const auto& e : entries)
    if (e.metric == metric && e.domain == domain) return e.value;
  throw Error("missing-metric", "report has no " + metric + " for " + domain);
}

std::vector<MetricEntry> compare_popularity(const UserActivity& real, const UserActivity& generated) {
  if (real.daily.rows() != generated.daily.rows() || real.domain != generated.domain)
    throw Error("shape-mismatch", "popularity universes differ");
  const std::string domain = to_string(real.domain);
  const Eigen::VectorXd p = popularity(real).probs;
  const Eigen::VectorXd q = popularity(generated).probs;
  const Eigen::MatrixXd per_user = user_popularity(generated) * 100.0;
  double crps_sum = 0.0;
  for (Eigen::Index id = 0; id < p.size(); ++id) crps_sum += crps(per_user.row(id).transpose(), 100.0 * p[id]);
  return {
      {"rmse", domain, rmse(100.0 * p, 100.0 * q)},
      {"mae", domain, mae(100.0 * p, 100.0 * q)},
      {"crps", domain, crps_sum / static_cast<double>(p.size())},
      {"jsd", domain, 100.0 * jsd(p, q)},
      {"m_tv", domain, 100.0 * m_tv(p, q)},
      {"spearman", domain, spearmanr(p, q)},
  };
}

void write_metric_table(std::ostream& out, const EvalReport& report) {
  out << "#config_hash:" << report.config_hash << "\n";
  out.precision(10);
  for (const auto& e : report.entries) out << e.metric << "\t" << e.domain << "\t" << e.value << "\n";
}

void write_metric_table(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw Error("io-error", "cannot write " + path.string());
  write_metric_table(out, report);
}

EvalReport read_metric_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot read " + path.string());
  EvalReport report;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.rfind("#config_hash:", 0) == 0) {
      report.config_hash = line.substr(13);
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    MetricEntry e;
    std::string value;
    if (!std::getline(row, e.metric, '\t') || !std::getline(row, e.domain, '\t') || !std::getline(row, value))
      throw Error("parse-error", path.string() + " line " + std::to_string(n) + ": expected metric, domain, value");
    try {
      e.value = std::stod(value);
    } catch (const std::exception&) {
      throw Error("parse-error", path.string() + " line " + std::to_string(n) + ": non-numeric value");
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace appgen
