#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "appgen/common.hpp"
#include "appgen/encoders.hpp"

namespace appgen {

// ---------------------------------------------------------------------------
// Noise schedule and closed-form forward/reverse updates
// ---------------------------------------------------------------------------

/// beta_t, alpha_t = 1 - beta_t and alpha_bar_t = prod_{s<=t} alpha_s.
/// Steps are 1-based in the public API: index t lives at [t - 1].
struct NoiseSchedule {
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha;
  Eigen::VectorXd alpha_bar;

  int steps() const { return static_cast<int>(beta.size()); }
  double beta_at(int t) const { return beta[t - 1]; }
  double alpha_at(int t) const { return alpha[t - 1]; }
  double alpha_bar_at(int t) const { return alpha_bar[t - 1]; }
};

/// Linear schedule from beta_start to beta_end inclusive.
NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);
NoiseSchedule schedule_from_betas(const Eigen::VectorXd& beta);

inline void check_step(const NoiseSchedule& s, int t) {
  if (t < 1 || t > s.steps())
    throw Error("invalid-step", "diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(s.steps()) + "]");
}

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
template <class DerivedX, class DerivedE>
typename DerivedX::PlainObject forward_noise(const Eigen::MatrixBase<DerivedX>& x0, int t,
                                             const Eigen::MatrixBase<DerivedE>& eps, const NoiseSchedule& s) {
  check_step(s, t);
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols())
    throw Error("shape-mismatch", "x0 and eps must have the same shape");
  const double ab = s.alpha_bar_at(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

/// Single-shot x0 estimate (x_t - sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_bar_t).
template <class DerivedX, class DerivedE>
typename DerivedX::PlainObject reconstruct_x0(const Eigen::MatrixBase<DerivedX>& x_t, int t,
                                              const Eigen::MatrixBase<DerivedE>& eps_hat, const NoiseSchedule& s) {
  check_step(s, t);
  const double ab = s.alpha_bar_at(t);
  return (x_t - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

/// x_{t-1} = (x_t - beta_t / sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_t) + sqrt(beta_t) z,
/// with z ignored at t = 1.
template <class DerivedX, class DerivedE, class DerivedZ>
typename DerivedX::PlainObject reverse_update(const Eigen::MatrixBase<DerivedX>& x_t, int t,
                                              const Eigen::MatrixBase<DerivedE>& eps_hat,
                                              const Eigen::MatrixBase<DerivedZ>& z, const NoiseSchedule& s) {
  check_step(s, t);
  const double b = s.beta_at(t);
  typename DerivedX::PlainObject out = (x_t - (b / std::sqrt(1.0 - s.alpha_bar_at(t))) * eps_hat) / std::sqrt(s.alpha_at(t));
  if (t > 1) out += std::sqrt(b) * z;
  return out;
}

/// Dynamic weight of the embedding loss: 1 - lambda_alpha * t / T.
double loss_weight(int t, int steps, double lambda_alpha);

// ---------------------------------------------------------------------------
// Conditional denoiser: residual stack of dilated 1-D convolutions over the
// embedding axis with gated activations and skip connections.
// ---------------------------------------------------------------------------

inline constexpr int kStepEmbeddingDim = 32;

struct DenoiserConfig {
  int length = 64;          // embedding dim; the 1-D signal length
  int channels = 16;        // residual channels
  int blocks = 8;
  int step_hidden = 64;
  int history_dim = 65;     // attention output + empty-history flag
  int context_dim = 160;    // temporal encoding + location embedding

  /// Dilation of block k: 1, 2, 4, 8, 1, 2, 4, 8, ...
  int dilation(int block) const { return 1 << (block % 4); }
};

struct ResidualBlockParams {
  Eigen::MatrixXd step_w;  // C x H
  Eigen::VectorXd step_b;
  Eigen::MatrixXd conv_w;  // 2C x 3C, taps (-d, 0, +d) stacked
  Eigen::VectorXd conv_b;
  Eigen::MatrixXd cond_w;  // 2C x 2
  Eigen::VectorXd cond_b;
  Eigen::MatrixXd out_w;   // 2C x C, top half residual, bottom half skip
  Eigen::VectorXd out_b;
};

struct DenoiserParams {
  DenoiserConfig config;
  Eigen::MatrixXd input_w;  // C x 1
  Eigen::VectorXd input_b;
  Eigen::MatrixXd step_w1;  // H x 32
  Eigen::VectorXd step_b1;
  Eigen::MatrixXd step_w2;  // H x H
  Eigen::VectorXd step_b2;
  Eigen::MatrixXd history_w;  // L x history_dim
  Eigen::VectorXd history_b;
  Eigen::MatrixXd context_w;  // L x context_dim
  Eigen::VectorXd context_b;
  std::vector<ResidualBlockParams> blocks;
  Eigen::MatrixXd skip_w;   // C x C
  Eigen::VectorXd skip_b;
  Eigen::MatrixXd final_w;  // 1 x C
  Eigen::VectorXd final_b;

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f(self.input_w), f(self.input_b);
    f(self.step_w1), f(self.step_b1), f(self.step_w2), f(self.step_b2);
    f(self.history_w), f(self.history_b), f(self.context_w), f(self.context_b);
    for (auto& b : self.blocks) {
      f(b.step_w), f(b.step_b), f(b.conv_w), f(b.conv_b);
      f(b.cond_w), f(b.cond_b), f(b.out_w), f(b.out_b);
    }
    f(self.skip_w), f(self.skip_b), f(self.final_w), f(self.final_b);
  }
};

/// Allocates parameters with fan-in scaled uniform weights; the output
/// projection starts at zero.
DenoiserParams make_denoiser_params(const DenoiserConfig& config, std::mt19937_64& rng);

/// 32-dim sinusoidal embedding of the noise index.
Eigen::VectorXd step_embedding(int t);

/// A batch of denoiser inputs; column b is one example.
struct DenoiserInput {
  Eigen::MatrixXd x;         // L x B noisy embeddings
  std::vector<int> steps;    // B diffusion steps in [1, T]
  Eigen::MatrixXd history;   // history_dim x B
  Eigen::MatrixXd context;   // context_dim x B
};

struct DenoiserTape;  // forward activations kept for backprop

/// eps_hat for every column. Throws Error("non-finite") on NaN/Inf inputs or
/// activations, naming the step and block.
Eigen::MatrixXd denoise_predict(const DenoiserParams& params, const DenoiserInput& input);

/// Convenience single-example form.
Eigen::VectorXd denoise_predict(const DenoiserParams& params, const Eigen::VectorXd& x_t, int t,
                                const Eigen::VectorXd& history, const Eigen::VectorXd& context);

struct DenoiserGradients {
  DenoiserParams params;       // same layout as the parameters
  Eigen::MatrixXd d_history;   // history_dim x B
  Eigen::MatrixXd d_context;   // context_dim x B
};

/// Forward + backward: accumulates gradients of sum(d_output .* eps_hat)
/// into `grads` (zero-initialized when its layout does not match) and
/// returns eps_hat.
Eigen::MatrixXd denoise_backward(const DenoiserParams& params, const DenoiserInput& input,
                                 const Eigen::MatrixXd& d_output, DenoiserGradients& grads);

/// Same, with d_output computed from eps_hat after the forward pass.
Eigen::MatrixXd denoise_backward(const DenoiserParams& params, const DenoiserInput& input,
                                 const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& d_output_of,
                                 DenoiserGradients& grads);

// ---------------------------------------------------------------------------
// Training objective
// ---------------------------------------------------------------------------

struct DiffusionBatch {
  Eigen::MatrixXd x0;        // L x B clean embeddings
  Eigen::MatrixXd eps;       // L x B Gaussian draws
  std::vector<int> steps;    // B
  Eigen::MatrixXd history;   // history_dim x B
  Eigen::MatrixXd context;   // context_dim x B
};

struct DiffusionLoss {
  double loss = 0.0;            // batch mean
  double diffusion_term = 0.0;  // batch mean of ||eps - eps_hat||^2
  double embedding_term = 0.0;  // batch mean of lambda_t ||x0 - x0_hat||^2
  DenoiserGradients grads;
};

/// L = ||eps - eps_hat||^2 + lambda_t ||x0 - x0_hat||^2 averaged over the
/// batch, x0_hat being the single-shot reconstruction from eps_hat.
DiffusionLoss training_loss(const DenoiserParams& params, const DiffusionBatch& batch, double lambda_alpha,
                            const NoiseSchedule& schedule, bool with_gradients = true);

/// One ancestral sampling step driven by the denoiser.
Eigen::VectorXd reverse_step(const DenoiserParams& params, const Eigen::VectorXd& x_t, int t,
                             const Eigen::VectorXd& history, const Eigen::VectorXd& context,
                             const Eigen::VectorXd& z, const NoiseSchedule& schedule);

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

/// Argmax cosine similarity over the table; ties go to the smallest id.
int decode_app(const Eigen::VectorXd& a_hat, const EmbeddingTable& table);

}  // namespace appgen
