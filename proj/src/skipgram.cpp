#include <algorithm>
#include <cmath>
#include <random>

#include "appgen/common.hpp"
#include "appgen/encoders.hpp"

namespace appgen {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

SgnsPairGradient sgns_pair_gradient(const Eigen::VectorXd& center, const Eigen::MatrixXd& outputs) {
  SgnsPairGradient g;
  g.center = Eigen::VectorXd::Zero(center.size());
  g.outputs.resize(outputs.rows(), outputs.cols());
  for (Eigen::Index k = 0; k < outputs.cols(); ++k) {
    const double label = k == 0 ? 1.0 : 0.0;
    const double s = outputs.col(k).dot(center);
    // -log s(x) = softplus(-x); -log s(-x) = softplus(x)
    g.loss += k == 0 ? softplus(-s) : softplus(s);
    const double coeff = sigmoid(s) - label;
    g.center += coeff * outputs.col(k);
    g.outputs.col(k) = coeff * center;
  }
  return g;
}

EmbeddingTable train_app_embeddings(const std::vector<std::vector<int>>& sequences, int num_apps,
                                    const SkipGramOptions& options) {
  if (num_apps < 1) throw Error("invalid-argument", "num_apps must be positive");
  if (options.dim < 2) throw Error("invalid-argument", "app embedding dim must be >= 2");
  if (options.window < 1 || options.negatives < 0 || options.epochs < 0)
    throw Error("invalid-argument", "invalid skip-gram options");

  std::vector<double> counts(num_apps, 0.0);
  for (const auto& seq : sequences)
    for (int a : seq) {
      if (a < 0 || a >= num_apps) throw Error("invalid-argument", "app id " + std::to_string(a) + " outside [0, N)");
      counts[a] += 1.0;
    }
  std::string missing;
  for (int a = 0; a < num_apps; ++a)
    if (counts[a] == 0.0) missing += (missing.empty() ? "" : ",") + std::to_string(a);
  if (!missing.empty()) throw Error("missing-apps", "apps with zero occurrences: " + missing);

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> init(-0.05, 0.05);
  Eigen::MatrixXd input(options.dim, num_apps), output(options.dim, num_apps);
  for (Eigen::Index i = 0; i < input.size(); ++i) input.data()[i] = init(rng);
  for (Eigen::Index i = 0; i < output.size(); ++i) output.data()[i] = init(rng);

  std::vector<double> noise(num_apps);
  for (int a = 0; a < num_apps; ++a) noise[a] = std::pow(counts[a], 0.75);
  std::discrete_distribution<int> draw_negative(noise.begin(), noise.end());

  std::int64_t total_pairs = 0;
  for (const auto& seq : sequences) {
    const auto n = static_cast<std::int64_t>(seq.size());
    for (std::int64_t i = 0; i < n; ++i)
      total_pairs += std::min<std::int64_t>(n - 1, i + options.window) - std::max<std::int64_t>(0, i - options.window);
  }
  total_pairs *= options.epochs;

  // Learning rate decays linearly to 1e-4 of its start value.
  std::int64_t done = 0;
  Eigen::MatrixXd outs(options.dim, options.negatives + 1);
  std::vector<int> ids;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (const auto& seq : sequences) {
      const int n = static_cast<int>(seq.size());
      for (int i = 0; i < n; ++i) {
        const int center = seq[i];
        for (int j = std::max(0, i - options.window); j <= std::min(n - 1, i + options.window); ++j) {
          if (j == i) continue;
          const double progress = total_pairs ? static_cast<double>(done) / total_pairs : 0.0;
          const double lr = options.learning_rate * std::max(1e-4, 1.0 - progress);
          ++done;

          ids.assign(1, seq[j]);
          for (int k = 0; k < options.negatives; ++k) {
            const int neg = draw_negative(rng);
            if (neg != seq[j]) ids.push_back(neg);
          }
          outs.resize(options.dim, static_cast<Eigen::Index>(ids.size()));
          for (std::size_t k = 0; k < ids.size(); ++k) outs.col(static_cast<Eigen::Index>(k)) = output.col(ids[k]);

          const auto g = sgns_pair_gradient(input.col(center), outs);
          for (std::size_t k = 0; k < ids.size(); ++k) output.col(ids[k]) -= lr * g.outputs.col(static_cast<Eigen::Index>(k));
          input.col(center) -= lr * g.center;
        }
      }
    }
  }
  return EmbeddingTable{EmbeddingDomain::app, std::move(input)};
}

}  // namespace appgen
