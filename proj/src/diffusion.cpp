#include "appgen/diffusion.hpp"

#include <cmath>

namespace appgen {

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw Error("invalid-schedule", "diffusion steps must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw Error("invalid-schedule", "need 0 < beta_start <= beta_end < 1");
  Eigen::VectorXd beta(steps);
  if (steps == 1)
    beta[0] = beta_start;
  else
    beta = Eigen::VectorXd::LinSpaced(steps, beta_start, beta_end);
  beta[steps - 1] = steps == 1 ? beta_start : beta_end;
  return schedule_from_betas(beta);
}

NoiseSchedule schedule_from_betas(const Eigen::VectorXd& beta) {
  if (beta.size() < 1) throw Error("invalid-schedule", "empty beta sequence");
  for (Eigen::Index t = 0; t < beta.size(); ++t) {
    if (!(beta[t] > 0.0 && beta[t] < 1.0)) throw Error("invalid-schedule", "beta outside (0, 1)");
    if (t > 0 && beta[t] < beta[t - 1]) throw Error("invalid-schedule", "beta must be non-decreasing");
  }
  NoiseSchedule s;
  s.beta = beta;
  s.alpha = (1.0 - beta.array()).matrix();
  s.alpha_bar.resize(beta.size());
  double prod = 1.0;
  for (Eigen::Index t = 0; t < beta.size(); ++t) {
    prod *= s.alpha[t];
    s.alpha_bar[t] = prod;
  }
  return s;
}

double loss_weight(int t, int steps, double lambda_alpha) {
  return 1.0 - lambda_alpha * static_cast<double>(t) / static_cast<double>(steps);
}

DiffusionLoss training_loss(const DenoiserParams& params, const DiffusionBatch& batch, double lambda_alpha,
                            const NoiseSchedule& schedule, bool with_gradients) {
  if (!(lambda_alpha >= 0.0 && lambda_alpha <= 1.0))
    throw Error("invalid-argument", "lambda_alpha must lie in [0, 1]");
  const Eigen::Index n = batch.x0.cols();
  if (n == 0) throw Error("invalid-argument", "empty diffusion batch");
  if (batch.eps.rows() != batch.x0.rows() || batch.eps.cols() != n ||
      static_cast<Eigen::Index>(batch.steps.size()) != n)
    throw Error("shape-mismatch", "diffusion batch shapes disagree");

  DenoiserInput in;
  in.x.resize(batch.x0.rows(), n);
  in.steps = batch.steps;
  in.history = batch.history;
  in.context = batch.context;
  // x0 - x0_hat = r_t (eps_hat - eps) with r_t = sqrt(1 - ab) / sqrt(ab)
  Eigen::VectorXd coef(n);
  for (Eigen::Index b = 0; b < n; ++b) {
    const int t = batch.steps[b];
    check_step(schedule, t);
    const double ab = schedule.alpha_bar_at(t);
    in.x.col(b) = forward_noise(batch.x0.col(b), t, batch.eps.col(b), schedule);
    const double r2 = (1.0 - ab) / ab;
    coef[b] = loss_weight(t, schedule.steps(), lambda_alpha) * r2;
  }

  DiffusionLoss out;
  Eigen::MatrixXd eps_hat;
  if (with_gradients) {
    // d/d eps_hat of sum_b [(1 + coef_b) ||eps_hat - eps||^2] / n
    eps_hat = denoise_backward(
        params, in,
        [&](const Eigen::MatrixXd& pred) -> Eigen::MatrixXd {
          return (2.0 / static_cast<double>(n)) * (pred - batch.eps) * (1.0 + coef.array()).matrix().asDiagonal();
        },
        out.grads);
  } else {
    eps_hat = denoise_predict(params, in);
  }
  const Eigen::VectorXd sq = (eps_hat - batch.eps).colwise().squaredNorm().transpose();
  out.diffusion_term = sq.mean();
  out.embedding_term = sq.cwiseProduct(coef).mean();
  out.loss = out.diffusion_term + out.embedding_term;
  if (!std::isfinite(out.loss)) throw Error("non-finite", "diffusion loss is not finite");
  return out;
}

Eigen::VectorXd reverse_step(const DenoiserParams& params, const Eigen::VectorXd& x_t, int t,
                             const Eigen::VectorXd& history, const Eigen::VectorXd& context, const Eigen::VectorXd& z,
                             const NoiseSchedule& schedule) {
  check_step(schedule, t);
  const Eigen::VectorXd eps_hat = denoise_predict(params, x_t, t, history, context);
  return reverse_update(x_t, t, eps_hat, z, schedule);
}

int decode_app(const Eigen::VectorXd& a_hat, const EmbeddingTable& table) {
  if (table.size() == 0) throw Error("empty-table", "app table is empty");
  if (a_hat.size() != table.dim()) throw Error("shape-mismatch", "decoded vector and table dims differ");
  if (!a_hat.allFinite()) throw Error("non-finite", "decoded vector is not finite");
  const double norm = a_hat.norm();
  if (norm == 0.0) throw Error("zero-norm", "cannot decode a zero-norm vector");
  const Eigen::VectorXd row_norms = table.vectors.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < row_norms.size(); ++j)
    if (row_norms[j] == 0.0) throw Error("zero-norm", "app " + std::to_string(j) + " has a zero-norm embedding");
  const Eigen::VectorXd cos = (table.vectors.transpose() * a_hat).cwiseQuotient(row_norms) / norm;
  int best = 0;
  for (Eigen::Index j = 1; j < cos.size(); ++j)
    if (cos[j] > cos[best]) best = static_cast<int>(j);
  return best;
}

}  // namespace appgen
