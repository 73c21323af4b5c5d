#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "appgen/common.hpp"
#include "appgen/encoders.hpp"
#include "appgen/optim.hpp"

using namespace appgen;

namespace {

double log_sigmoid(double x) { return -std::log1p(std::exp(-x)); }

double sgns_loss_direct(const Eigen::VectorXd& v, const Eigen::MatrixXd& u) {
  double l = -log_sigmoid(u.col(0).dot(v));
  for (Eigen::Index n = 1; n < u.cols(); ++n) l -= log_sigmoid(-u.col(n).dot(v));
  return l;
}

double cosine(const EmbeddingTable& t, int a, int b) {
  return t.row(a).dot(t.row(b)) / (t.row(a).norm() * t.row(b).norm());
}

Geography toy_geography() {
  Geography g;
  g.num_stations = 4;
  g.num_regions = 2;
  g.num_business_areas = 1;
  g.num_pois = 3;
  g.station_region = {0, 0, 1, 1};
  g.station_business_area = {0, -1, 0, -1};
  g.poi_station = {0, 2, 3};
  g.adjacency = {{0, 1}, {1, 2}, {2, 3}};
  return g;
}

}  // namespace

TEST_CASE("sgns pair gradient matches the loss and finite differences") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 0.7);
  Eigen::VectorXd v(6);
  Eigen::MatrixXd u(6, 4);
  for (auto& x : v.reshaped()) x = nd(rng);
  for (auto& x : u.reshaped()) x = nd(rng);
  const auto g = sgns_pair_gradient(v, u);
  CHECK(g.loss == doctest::Approx(sgns_loss_direct(v, u)).epsilon(1e-12));
  const double h = 1e-6;
  for (int i = 0; i < 6; ++i) {
    Eigen::VectorXd vp = v, vm = v;
    vp[i] += h;
    vm[i] -= h;
    CHECK(g.center[i] == doctest::Approx((sgns_loss_direct(vp, u) - sgns_loss_direct(vm, u)) / (2 * h)).epsilon(1e-6));
  }
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 6; ++i) {
      Eigen::MatrixXd up = u, um = u;
      up(i, k) += h;
      um(i, k) -= h;
      CHECK(g.outputs(i, k) ==
            doctest::Approx((sgns_loss_direct(v, up) - sgns_loss_direct(v, um)) / (2 * h)).epsilon(1e-6));
    }
}

TEST_CASE("skip-gram separates co-occurring from never co-occurring apps") {
  // apps 0 and 1 always share a sequence; app 2 never meets either
  std::vector<std::vector<int>> seqs;
  for (int i = 0; i < 200; ++i) {
    seqs.push_back({0, 1, 0, 1});
    seqs.push_back({2, 2, 2});
  }
  SkipGramOptions o;
  o.dim = 8;
  o.window = 2;
  o.epochs = 5;
  o.seed = 3;
  const auto t = train_app_embeddings(seqs, 3, o);
  CHECK(t.domain == EmbeddingDomain::app);
  CHECK(t.dim() == 8);
  CHECK(t.size() == 3);
  CHECK(cosine(t, 0, 1) > cosine(t, 0, 2));
  CHECK(cosine(t, 0, 1) > cosine(t, 1, 2));
  const auto again = train_app_embeddings(seqs, 3, o);
  CHECK(again.vectors == t.vectors);
}

TEST_CASE("embedding table lookups and file round trip") {
  EmbeddingTable t;
  t.domain = EmbeddingDomain::location;
  t.vectors = Eigen::MatrixXd::Random(3, 5);
  CHECK(t.contains(4));
  CHECK_FALSE(t.contains(5));
  try {
    t.row(7);
    FAIL("expected missing-embedding");
  } catch (const Error& e) {
    CHECK(e.tag() == "missing-embedding");
  }
  std::stringstream ss;
  write_embeddings(ss, t, "feedbeef");
  std::string hash;
  const auto back = read_embeddings(ss, &hash);
  CHECK(hash == "feedbeef");
  CHECK(back.domain == EmbeddingDomain::location);
  CHECK((back.vectors - t.vectors).cwiseAbs().maxCoeff() < 1e-15);
  std::stringstream plain;
  write_embeddings(plain, t);
  std::string none = "unset";
  read_embeddings(plain, &none);
  CHECK(none == "unset");
}

TEST_CASE("urban graph has the four relations") {
  const auto kg = build_urban_kg(toy_geography());
  CHECK(kg.num_entities() == 4 + 2 + 1 + 3);
  int counts[kNumRelations] = {};
  for (const auto& f : kg.facts) ++counts[static_cast<int>(f.relation)];
  CHECK(counts[static_cast<int>(Relation::base_locate_at)] == 4);  // every station in a region
  CHECK(counts[static_cast<int>(Relation::base_belong_to)] == 2);  // stations 0 and 2
  CHECK(counts[static_cast<int>(Relation::served_by)] == 3);       // one per POI
  CHECK(counts[static_cast<int>(Relation::base_border_by)] == 6);  // both directions
  CHECK(std::is_sorted(kg.facts.begin(), kg.facts.end()));
  CHECK(kg.entity(kg.entity_index(EntityType::poi, 2)) == Entity{EntityType::poi, 2});
  CHECK(kg.entity_index(EntityType::base_station, 3) == 3);

  std::stringstream ss;
  write_kg(ss, kg, "0123");
  std::string hash;
  const auto back = read_kg(ss, &hash);
  CHECK(hash == "0123");
  CHECK(back.facts == kg.facts);
  CHECK(back.num_pois == 3);
}

TEST_CASE("tucker loss gradient matches finite differences") {
  const auto kg = build_urban_kg(toy_geography());
  TuckerModel m;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 0.5);
  m.entities.resize(3, kg.num_entities());
  m.relations.resize(2, kNumRelations);
  m.core.assign(2, Eigen::MatrixXd(3, 3));
  TuckerModel::visit(m, [&](auto& t) {
    for (auto& x : t.reshaped()) x = nd(rng);
  });
  std::vector<LabeledTriple> samples;
  for (const auto& f : kg.facts) samples.push_back({f.head, static_cast<int>(f.relation), f.tail, 1.0});
  samples.push_back({0, 1, 5, 0.0});
  samples.push_back({2, 3, 9, 0.0});

  // trilinear score oracle
  const auto& f0 = kg.facts.front();
  double direct = 0;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 2; ++k)
      for (int j = 0; j < 3; ++j)
        direct += m.core[k](i, j) * m.entities(i, f0.head) * m.relations(k, static_cast<int>(f0.relation)) *
                  m.entities(j, f0.tail);
  CHECK(tucker_score(m, f0.head, static_cast<int>(f0.relation), f0.tail) == doctest::Approx(direct).epsilon(1e-12));

  TuckerModel grad;
  tucker_loss(m, samples, &grad);
  const Eigen::VectorXd analytic = flatten(grad);
  const Eigen::VectorXd theta = flatten(m);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    TuckerModel mp = m, mm = m;
    unflatten(tp, mp);
    unflatten(tm, mm);
    const double fd = (tucker_loss(mp, samples) - tucker_loss(mm, samples)) / (2 * h);
    CHECK(std::abs(analytic[i] - fd) <= 1e-6 + 1e-4 * std::abs(fd));
  }
}

TEST_CASE("tucker fits a toy graph") {
  const auto kg = build_urban_kg(toy_geography());
  TuckerOptions o;
  o.entity_dim = 8;
  o.relation_dim = 4;
  o.epochs = 300;
  o.learning_rate = 0.01;
  o.seed = 2;
  const auto r = train_tucker(kg, o);
  CHECK(r.loss_curve.back() < r.loss_curve.front());
  CHECK(r.locations.size() == 4);
  CHECK(r.locations.dim() == 8);
  CHECK(r.locations.vectors == r.model.entities.leftCols(4));
  CHECK(tucker_hits_at(r.model, kg, 10) == 1.0);
  CHECK(tucker_hits_at(r.model, kg, 1) > 0.5);
}

TEST_CASE("temporal encoding equals the sinusoid formula") {
  for (int bin = 0; bin < kBinsPerDay; ++bin) {
    const auto e = temporal_encoding(bin);
    REQUIRE(e.size() == kTemporalDim);
    for (int j = 0; j < kTemporalDim / 2; ++j) {
      const double angle = bin / std::pow(10000.0, j / 64.0);
      CHECK(std::abs(e[j] - std::sin(angle)) < 1e-12);
      CHECK(std::abs(e[j + 64] - std::cos(angle)) < 1e-12);
    }
    CHECK(temporal_table().col(bin) == e);
  }
  CHECK_THROWS_AS(temporal_encoding(48), Error);
}
