#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "appgen/common.hpp"
#include "appgen/encoders.hpp"
#include "appgen/optim.hpp"

namespace appgen {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void check_ids(const TuckerModel& m, int head, int relation, int tail) {
  const auto n = m.entities.cols();
  if (head < 0 || head >= n || tail < 0 || tail >= n)
    throw Error("unknown-entity", "entity id outside the TuckER table");
  if (relation < 0 || relation >= m.relations.cols()) throw Error("unknown-relation", "relation id outside the TuckER table");
}

}  // namespace

Eigen::MatrixXd TuckerModel::relation_matrix(int relation) const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(entity_dim(), entity_dim());
  for (int k = 0; k < relation_dim(); ++k) m += relations(k, relation) * core[k];
  return m;
}

double tucker_score(const TuckerModel& model, int head, int relation, int tail) {
  check_ids(model, head, relation, tail);
  return model.entities.col(head).dot(model.relation_matrix(relation) * model.entities.col(tail));
}

double tucker_probability(const TuckerModel& model, int head, int relation, int tail) {
  return sigmoid(tucker_score(model, head, relation, tail));
}

double tucker_loss(const TuckerModel& model, const std::vector<LabeledTriple>& samples, TuckerModel* gradient) {
  if (samples.empty()) return 0.0;
  const auto n_rel = model.relations.cols();
  std::vector<Eigen::MatrixXd> mats(n_rel);
  std::vector<Eigen::MatrixXd> outer(n_rel);
  if (gradient) *gradient = zeros_like(model);

  const double scale = 1.0 / static_cast<double>(samples.size());
  double loss = 0.0;
  for (const auto& s : samples) {
    check_ids(model, s.head, s.relation, s.tail);
    if (mats[s.relation].size() == 0) {
      mats[s.relation] = model.relation_matrix(s.relation);
      outer[s.relation] = Eigen::MatrixXd::Zero(model.entity_dim(), model.entity_dim());
    }
    const auto& m = mats[s.relation];
    const auto eh = model.entities.col(s.head);
    const auto et = model.entities.col(s.tail);
    const Eigen::VectorXd m_et = m * et;
    const double score = eh.dot(m_et);
    loss += softplus(score) - s.label * score;
    if (gradient) {
      const double g = (sigmoid(score) - s.label) * scale;
      gradient->entities.col(s.head) += g * m_et;
      gradient->entities.col(s.tail) += g * (m.transpose() * eh);
      outer[s.relation].noalias() += g * eh * et.transpose();
    }
  }
  if (gradient) {
    for (Eigen::Index r = 0; r < n_rel; ++r) {
      if (outer[r].size() == 0) continue;
      for (int k = 0; k < model.relation_dim(); ++k) {
        gradient->core[k] += model.relations(k, r) * outer[r];
        gradient->relations(k, r) = model.core[k].cwiseProduct(outer[r]).sum();
      }
    }
  }
  return loss * scale;
}

namespace {

using TailIndex = std::map<std::pair<int, int>, std::set<int>>;

TailIndex known_tails(const UrbanKG& kg) {
  TailIndex idx;
  for (const auto& f : kg.facts) idx[{f.head, static_cast<int>(f.relation)}].insert(f.tail);
  return idx;
}

std::vector<LabeledTriple> draw_samples(const UrbanKG& kg, const TailIndex& tails, int negatives,
                                        std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, kg.num_entities() - 1);
  std::vector<LabeledTriple> out;
  out.reserve(kg.facts.size() * (negatives + 1));
  for (const auto& f : kg.facts) {
    const int r = static_cast<int>(f.relation);
    out.push_back({f.head, r, f.tail, 1.0});
    const auto& known = tails.at({f.head, r});
    if (static_cast<int>(known.size()) >= kg.num_entities()) continue;
    for (int k = 0; k < negatives; ++k) {
      int t = pick(rng);
      while (known.count(t)) t = pick(rng);
      out.push_back({f.head, r, t, 0.0});
    }
  }
  return out;
}

}  // namespace

TuckerResult train_tucker(const UrbanKG& kg, const TuckerOptions& options) {
  if (kg.num_entities() < 2) throw Error("kg-too-small", "knowledge graph needs at least 2 entities to corrupt tails");
  if (kg.facts.empty()) throw Error("kg-empty", "knowledge graph has no facts");
  if (options.entity_dim < 1 || options.relation_dim < 1 || options.batch_size < 1 || options.negatives < 0)
    throw Error("invalid-argument", "invalid TuckER options");

  std::mt19937_64 rng(options.seed);
  TuckerModel model;
  model.entities.resize(options.entity_dim, kg.num_entities());
  model.relations.resize(options.relation_dim, kNumRelations);
  model.core.assign(options.relation_dim, Eigen::MatrixXd(options.entity_dim, options.entity_dim));
  fill_uniform(model, 0.05, rng);

  const auto tails = known_tails(kg);
  std::mt19937_64 eval_rng(derive_seed(options.seed, "tucker-eval"));
  const auto eval_samples = draw_samples(kg, tails, options.negatives, eval_rng);

  TuckerResult result;
  result.loss_curve.push_back(tucker_loss(model, eval_samples));

  Adam adam(options.learning_rate);
  TuckerModel grad;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    auto samples = draw_samples(kg, tails, options.negatives, rng);
    std::shuffle(samples.begin(), samples.end(), rng);
    for (std::size_t at = 0; at < samples.size(); at += options.batch_size) {
      const std::vector<LabeledTriple> batch(samples.begin() + at,
                                             samples.begin() + std::min(samples.size(), at + options.batch_size));
      tucker_loss(model, batch, &grad);
      adam.step(model, grad);
    }
    result.loss_curve.push_back(tucker_loss(model, eval_samples));
    if (!std::isfinite(result.loss_curve.back())) throw Error("diverged", "TuckER loss became non-finite");
  }

  result.locations.domain = EmbeddingDomain::location;
  result.locations.vectors = model.entities.leftCols(kg.num_stations);
  result.model = std::move(model);
  return result;
}

double tucker_hits_at(const TuckerModel& model, const UrbanKG& kg, int k) {
  if (kg.facts.empty()) return 0.0;
  const auto tails = known_tails(kg);
  int hits = 0;
  for (const auto& f : kg.facts) {
    const int r = static_cast<int>(f.relation);
    const Eigen::VectorXd scores =
        model.entities.transpose() * (model.relation_matrix(r).transpose() * model.entities.col(f.head));
    const auto& known = tails.at({f.head, r});
    int rank = 1;
    for (Eigen::Index e = 0; e < scores.size(); ++e)
      if (e != f.tail && !known.count(static_cast<int>(e)) && scores[e] > scores[f.tail]) ++rank;
    if (rank <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(kg.facts.size());
}

}  // namespace appgen
