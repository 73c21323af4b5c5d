#include <doctest.h>

#include <cmath>
#include <random>

#include "appgen/metrics.hpp"

using namespace appgen;

namespace {

Eigen::VectorXd random_distribution(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd p(n);
  for (int i = 0; i < n; ++i) p[i] = u(rng);
  return p / p.sum();
}

double kl_direct(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  double s = 0.0;
  for (int i = 0; i < p.size(); ++i)
    if (p[i] > 0) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

// Ranks by counting: rank = 1 + #smaller + (#equal - 1) / 2.
std::vector<double> ranks_by_counting(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double y : x) {
      if (y < x[i]) ++less;
      if (y == x[i]) ++equal;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Midpoint quadrature of (F(z) - 1{x <= z})^2 over a range covering all mass.
double crps_quadrature(const std::vector<double>& s, double x, int cells = 200000) {
  double lo = x, hi = x;
  for (double v : s) lo = std::min(lo, v), hi = std::max(hi, v);
  lo -= 1.0;
  hi += 1.0;
  const double h = (hi - lo) / cells;
  double total = 0.0;
  for (int c = 0; c < cells; ++c) {
    const double z = lo + (c + 0.5) * h;
    double f = 0.0;
    for (double v : s) f += v <= z ? 1.0 : 0.0;
    f /= static_cast<double>(s.size());
    const double step = x <= z ? 1.0 : 0.0;
    total += (f - step) * (f - step) * h;
  }
  return total;
}

}  // namespace

TEST_CASE("rmse, mae, m_tv and jsd agree with direct formulas") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 30;
    const Eigen::VectorXd p = random_distribution(n, rng);
    const Eigen::VectorXd q = random_distribution(n, rng);
    double se = 0, ae = 0;
    for (int i = 0; i < n; ++i) se += (p[i] - q[i]) * (p[i] - q[i]), ae += std::abs(p[i] - q[i]);
    CHECK(std::abs(rmse(p, q) - std::sqrt(se / n)) < 1e-6);
    CHECK(std::abs(mae(p, q) - ae / n) < 1e-6);
    CHECK(std::abs(m_tv(p, q) - ae / 2) < 1e-6);
    const Eigen::VectorXd m = 0.5 * (p + q);
    CHECK(std::abs(jsd(p, q) - 0.5 * (kl_direct(p, m) + kl_direct(q, m))) < 1e-6);
  }
}

TEST_CASE("jsd closed forms") {
  Eigen::VectorXd p(4), q(4);
  p << 0.5, 0.5, 0, 0;
  q << 0, 0, 0.25, 0.75;
  CHECK(std::abs(jsd(p, q) - std::log(2.0)) < 1e-9);
  CHECK(std::abs(jsd(p, p)) < 1e-12);
  CHECK(jsd(p, q) == jsd(q, p));
  Eigen::VectorXd bad(4);
  bad << 0.5, 0.5, 0.5, 0;
  CHECK_THROWS_AS(jsd(p, bad), Error);
  CHECK_THROWS_AS(jsd(p, Eigen::VectorXd(3)), Error);
}

TEST_CASE("spearman matches rank recomputation, ties included") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> small(0, 6);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + trial % 20;
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) a[i] = small(rng), b[i] = small(rng) + 0.5 * a[i];
    const auto ra = ranks_by_counting(a), rb = ranks_by_counting(b);
    const Eigen::VectorXd ea = Eigen::Map<const Eigen::VectorXd>(a.data(), n);
    const Eigen::VectorXd eb = Eigen::Map<const Eigen::VectorXd>(b.data(), n);
    const Eigen::VectorXd er = average_ranks(ea);
    for (int i = 0; i < n; ++i) CHECK(er[i] == ra[i]);
    const bool constant = *std::min_element(a.begin(), a.end()) == *std::max_element(a.begin(), a.end()) ||
                          *std::min_element(b.begin(), b.end()) == *std::max_element(b.begin(), b.end());
    const double expected = constant ? 0.0 : pearson(ra, rb);
    CHECK(std::abs(spearmanr(ea, eb) - expected) < 1e-6);
  }
}

TEST_CASE("spearman closed forms") {
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(10, 0, 9);
  CHECK(std::abs(spearmanr(x, x.reverse()) + 1.0) < 1e-9);
  CHECK(std::abs(spearmanr(x, x.array().exp().matrix()) - 1.0) < 1e-9);
  CHECK(spearmanr(x, Eigen::VectorXd::Ones(10)) == 0.0);
}

TEST_CASE("crps matches grid quadrature") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd(0.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 7;
    std::vector<double> s(n);
    for (auto& v : s) v = nd(rng);
    const double x = nd(rng);
    const Eigen::VectorXd es = Eigen::Map<const Eigen::VectorXd>(s.data(), n);
    // the integrand is piecewise constant, so the midpoint grid is exact up to
    // the cells that straddle a breakpoint
    CHECK(std::abs(crps(es, x) - crps_quadrature(s, x)) < 1e-4);
  }
}

TEST_CASE("crps equals the energy form on larger samples") {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial;
    Eigen::VectorXd s(n);
    for (int i = 0; i < n; ++i) s[i] = nd(rng);
    const double x = nd(rng);
    double to_obs = 0, pair = 0;
    for (int i = 0; i < n; ++i) {
      to_obs += std::abs(s[i] - x);
      for (int j = 0; j < n; ++j) pair += std::abs(s[i] - s[j]);
    }
    CHECK(std::abs(crps(s, x) - (to_obs / n - pair / (2.0 * n * n))) < 1e-6);
  }
}

TEST_CASE("crps point mass is the absolute error") {
  Eigen::VectorXd s(1);
  s << 3.25;
  CHECK(std::abs(crps(s, -1.5) - 4.75) < 1e-9);
  Eigen::VectorXd same = Eigen::VectorXd::Constant(5, 2.0);
  CHECK(std::abs(crps(same, 7.0) - 5.0) < 1e-9);
  CHECK_THROWS_AS(crps(Eigen::VectorXd(0), 0.0), Error);
}

TEST_CASE("popularity averages per-user daily counts") {
  // user a: day 0 apps {0,0,1}, day 1 app {0}; user b: day 0 app {2}
  auto rec = [](const std::string& u, std::int64_t ts, int app) {
    UsageRecord r;
    r.user_id = u;
    r.timestamp = ts;
    r.app_id = app;
    r.category_id = app == 2 ? 1 : 0;
    return r;
  };
  Dataset d = {{"a", {rec("a", 100, 0), rec("a", 200, 0), rec("a", 300, 1)}},
               {"a", {rec("a", 86400 + 5, 0)}},
               {"b", {rec("b", 50, 2)}}};
  const auto act = user_activity(d, 3);
  REQUIRE(act.users == std::vector<std::string>{"a", "b"});
  CHECK(act.daily(0, 0) == 1.5);
  CHECK(act.daily(1, 0) == 0.5);
  CHECK(act.daily(2, 1) == 1.0);
  const auto p = popularity(d, 3).probs;
  // means over users: app0 0.75, app1 0.25, app2 0.5
  CHECK(p[0] == doctest::Approx(0.75 / 1.5));
  CHECK(p[1] == doctest::Approx(0.25 / 1.5));
  CHECK(p[2] == doctest::Approx(0.5 / 1.5));
  const auto pc = popularity(d, 2, PopularityDomain::category).probs;
  CHECK(pc[0] == doctest::Approx(1.0 / 1.5));
  CHECK_THROWS_WITH_AS(popularity(Dataset{}, 3), doctest::Contains("empty"), Error);
  d[0].events[0].category_id.reset();
  try {
    popularity(d, 2, PopularityDomain::category);
    FAIL("expected missing-category");
  } catch (const Error& e) {
    CHECK(e.tag() == "missing-category");
  }
}

TEST_CASE("ranking metrics on hand-computed lists") {
  const std::vector<std::vector<int>> pred = {{0, 1, 2}, {1, 0, 2}, {2, 1, 0}, {0, 2, 1}};
  const std::vector<int> truth = {0, 0, 1, 2};
  const auto s = ranking_metrics(pred, truth, {1, 2});
  // ranks 1, 2, 2, 2
  CHECK(s[0].accuracy == doctest::Approx(0.25));
  CHECK(s[0].mrr == doctest::Approx(0.25));
  CHECK(s[1].accuracy == doctest::Approx(1.0));
  CHECK(s[1].mrr == doctest::Approx((1 + 0.5 * 3) / 4.0));
  CHECK(s[1].ndcg == doctest::Approx((1 + 3 / std::log2(3.0)) / 4.0));
  // per-class hits@1: class 0 -> 1/2, class 1 -> 0, class 2 -> 0
  CHECK(s[0].recall == doctest::Approx(1.0 / 6.0));
  CHECK(s[0].f1 == doctest::Approx(2 * 0.25 * (1.0 / 6) / (0.25 + 1.0 / 6)));
  CHECK_THROWS_AS(ranking_metrics(pred, {0}), Error);
}

TEST_CASE("metric table round trip keeps the hash") {
  EvalReport r;
  r.config_hash = "00ff00ff00ff00ff";
  r.entries = {{"rmse", "app", 1.25}, {"jsd", "category", 0.125}};
  const auto path = std::filesystem::temp_directory_path() / "appgen_metric_table.tsv";
  write_metric_table(path, r);
  const auto back = read_metric_table(path);
  CHECK(back.config_hash == r.config_hash);
  CHECK(back.value("rmse", "app") == 1.25);
  CHECK(back.value("jsd", "category") == 0.125);
  CHECK_THROWS_AS(back.value("mae", "app"), Error);
  std::filesystem::remove(path);
}

TEST_CASE("compare_popularity of identical data is perfect") {
  Dataset d;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> app(0, 4);
  for (int u = 0; u < 6; ++u) {
    UserSequence s{"u" + std::to_string(u), {}};
    for (int e = 0; e < 10; ++e) {
      UsageRecord r;
      r.user_id = s.user_id;
      r.timestamp = 60 * e;
      r.app_id = app(rng);
      s.events.push_back(r);
    }
    d.push_back(s);
  }
  const auto act = user_activity(d, 5);
  const auto m = compare_popularity(act, act);
  for (const auto& e : m) {
    if (e.metric == "spearman") CHECK(e.value == doctest::Approx(1.0));
    else if (e.metric != "crps") CHECK(std::abs(e.value) < 1e-12);
  }
}
