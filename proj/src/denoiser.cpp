#include <cmath>
#include <functional>

#include "appgen/diffusion.hpp"
#include "appgen/optim.hpp"

namespace appgen {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

double fan_in_bound(Eigen::Index fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

// out(:, b*L + l) = in(:, b*L + l + offset), zero outside [0, L).
MatrixXd shift_columns(const MatrixXd& in, int length, int offset) {
  MatrixXd out = MatrixXd::Zero(in.rows(), in.cols());
  const int span = length - std::abs(offset);
  if (span <= 0) return out;
  const Eigen::Index batch = in.cols() / length;
  const int dst = std::max(0, -offset);
  const int src = std::max(0, offset);
  for (Eigen::Index b = 0; b < batch; ++b) out.middleCols(b * length + dst, span) = in.middleCols(b * length + src, span);
  return out;
}

// Adds column b of `per_example` to the L columns of example b.
void add_per_example(MatrixXd& m, const MatrixXd& per_example, int length) {
  for (Eigen::Index b = 0; b < per_example.cols(); ++b)
    m.middleCols(b * length, length).colwise() += per_example.col(b);
}

MatrixXd sum_per_example(const MatrixXd& m, int length) {
  const Eigen::Index batch = m.cols() / length;
  MatrixXd out(m.rows(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) out.col(b) = m.middleCols(b * length, length).rowwise().sum();
  return out;
}

MatrixXd as_row(const MatrixXd& m) {
  return Eigen::Map<const Eigen::RowVectorXd>(m.data(), m.size());
}

}  // namespace

struct DenoiserTape {
  MatrixXd x_row;      // 1 x N
  MatrixXd input_pre;  // C x N
  MatrixXd fourier;    // 32 x B
  MatrixXd step_u1, step_e1, step_u2, step_e2;
  MatrixXd cond;       // 2 x N
  struct Block {
    MatrixXd stacked;  // 3C x N
    MatrixXd gate_sig, gate_tanh, gated;
  };
  std::vector<Block> blocks;
  MatrixXd skip_scaled;  // C x N
  MatrixXd skip_pre;     // C x N
  MatrixXd skip_act;     // C x N
};

namespace {

void check_input(const DenoiserParams& p, const DenoiserInput& in) {
  const auto& c = p.config;
  const auto batch = in.x.cols();
  if (in.x.rows() != c.length || in.history.rows() != c.history_dim || in.context.rows() != c.context_dim ||
      in.history.cols() != batch || in.context.cols() != batch || static_cast<Eigen::Index>(in.steps.size()) != batch)
    throw Error("shape-mismatch", "denoiser input shapes do not match the configuration");
  if (!in.x.allFinite() || !in.history.allFinite() || !in.context.allFinite())
    throw Error("non-finite", "denoiser input contains NaN or Inf");
}

MatrixXd swish(const MatrixXd& u) {
  return u.unaryExpr([](double v) { return v * sigmoid(v); });
}

MatrixXd swish_grad(const MatrixXd& u) {
  return u.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s + v * s * (1.0 - s);
  });
}

MatrixXd forward(const DenoiserParams& p, const DenoiserInput& in, DenoiserTape* tape) {
  check_input(p, in);
  const auto& cfg = p.config;
  const int L = cfg.length;
  const int C = cfg.channels;
  const Eigen::Index B = in.x.cols();
  const Eigen::Index N = L * B;

  const MatrixXd x_row = as_row(in.x);
  MatrixXd input_pre = p.input_w * x_row;
  input_pre.colwise() += p.input_b;
  MatrixXd x = input_pre.cwiseMax(0.0);

  MatrixXd fourier(kStepEmbeddingDim, B);
  for (Eigen::Index b = 0; b < B; ++b) fourier.col(b) = step_embedding(in.steps[b]);
  MatrixXd u1 = p.step_w1 * fourier;
  u1.colwise() += p.step_b1;
  MatrixXd e1 = swish(u1);
  MatrixXd u2 = p.step_w2 * e1;
  u2.colwise() += p.step_b2;
  MatrixXd e2 = swish(u2);

  MatrixXd hs = p.history_w * in.history;
  hs.colwise() += p.history_b;
  MatrixXd cs = p.context_w * in.context;
  cs.colwise() += p.context_b;
  MatrixXd cond(2, N);
  cond.row(0) = as_row(hs);
  cond.row(1) = as_row(cs);

  if (tape) {
    tape->x_row = x_row;
    tape->input_pre = input_pre;
    tape->fourier = fourier;
    tape->step_u1 = u1;
    tape->step_e1 = e1;
    tape->step_u2 = u2;
    tape->step_e2 = e2;
    tape->cond = cond;
    tape->blocks.assign(p.blocks.size(), {});
  }

  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  MatrixXd skip = MatrixXd::Zero(C, N);
  MatrixXd stacked(3 * C, N);
  for (std::size_t k = 0; k < p.blocks.size(); ++k) {
    const auto& blk = p.blocks[k];
    const int d = cfg.dilation(static_cast<int>(k));
    MatrixXd step_bias = blk.step_w * e2;
    step_bias.colwise() += blk.step_b;
    MatrixXd y = x;
    add_per_example(y, step_bias, L);
    stacked.topRows(C) = shift_columns(y, L, -d);
    stacked.middleRows(C, C) = y;
    stacked.bottomRows(C) = shift_columns(y, L, d);

    MatrixXd z = blk.conv_w * stacked;
    z.noalias() += blk.cond_w * cond;
    z.colwise() += blk.conv_b + blk.cond_b;
    MatrixXd sig = z.topRows(C).unaryExpr([](double v) { return sigmoid(v); });
    MatrixXd th = z.bottomRows(C).array().tanh().matrix();
    MatrixXd gated = sig.cwiseProduct(th);
    MatrixXd out = blk.out_w * gated;
    out.colwise() += blk.out_b;
    x = (x + out.topRows(C)) * inv_sqrt2;
    skip += out.bottomRows(C);
    if (!x.allFinite() || !skip.allFinite()) {
      std::string steps;
      for (std::size_t b = 0; b < in.steps.size() && b < 8; ++b) steps += (b ? "," : "") + std::to_string(in.steps[b]);
      throw Error("non-finite", "denoiser block " + std::to_string(k) + " produced non-finite activations (steps " +
                                    steps + (in.steps.size() > 8 ? ",..." : "") + ")");
    }
    if (tape) {
      auto& tb = tape->blocks[k];
      tb.stacked = stacked;
      tb.gate_sig = std::move(sig);
      tb.gate_tanh = std::move(th);
      tb.gated = std::move(gated);
    }
  }

  MatrixXd skip_scaled = skip / std::sqrt(static_cast<double>(p.blocks.size()));
  MatrixXd skip_pre = p.skip_w * skip_scaled;
  skip_pre.colwise() += p.skip_b;
  MatrixXd skip_act = skip_pre.cwiseMax(0.0);
  MatrixXd out_row = p.final_w * skip_act;
  out_row.array() += p.final_b[0];

  if (tape) {
    tape->skip_scaled = std::move(skip_scaled);
    tape->skip_pre = std::move(skip_pre);
    tape->skip_act = std::move(skip_act);
  }
  return Eigen::Map<const MatrixXd>(out_row.data(), L, B);
}

}  // namespace

DenoiserParams make_denoiser_params(const DenoiserConfig& c, std::mt19937_64& rng) {
  if (c.length < 1 || c.channels < 1 || c.blocks < 1 || c.step_hidden < 1 || c.history_dim < 1 || c.context_dim < 1)
    throw Error("invalid-argument", "denoiser dimensions must be positive");
  DenoiserParams p;
  p.config = c;
  const int C = c.channels, H = c.step_hidden, L = c.length;
  p.input_w = uniform_matrix(C, 1, 1.0, rng);
  p.input_b = VectorXd::Zero(C);
  p.step_w1 = uniform_matrix(H, kStepEmbeddingDim, fan_in_bound(kStepEmbeddingDim), rng);
  p.step_b1 = VectorXd::Zero(H);
  p.step_w2 = uniform_matrix(H, H, fan_in_bound(H), rng);
  p.step_b2 = VectorXd::Zero(H);
  p.history_w = uniform_matrix(L, c.history_dim, fan_in_bound(c.history_dim), rng);
  p.history_b = VectorXd::Zero(L);
  p.context_w = uniform_matrix(L, c.context_dim, fan_in_bound(c.context_dim), rng);
  p.context_b = VectorXd::Zero(L);
  for (int k = 0; k < c.blocks; ++k) {
    ResidualBlockParams b;
    b.step_w = uniform_matrix(C, H, fan_in_bound(H), rng);
    b.step_b = VectorXd::Zero(C);
    b.conv_w = uniform_matrix(2 * C, 3 * C, fan_in_bound(3 * C), rng);
    b.conv_b = VectorXd::Zero(2 * C);
    b.cond_w = uniform_matrix(2 * C, 2, fan_in_bound(2), rng);
    b.cond_b = VectorXd::Zero(2 * C);
    b.out_w = uniform_matrix(2 * C, C, fan_in_bound(C), rng);
    b.out_b = VectorXd::Zero(2 * C);
    p.blocks.push_back(std::move(b));
  }
  p.skip_w = uniform_matrix(C, C, fan_in_bound(C), rng);
  p.skip_b = VectorXd::Zero(C);
  p.final_w = MatrixXd::Zero(1, C);
  p.final_b = VectorXd::Zero(1);
  return p;
}

VectorXd step_embedding(int t) {
  constexpr int half = kStepEmbeddingDim / 2;
  VectorXd d(kStepEmbeddingDim);
  for (int j = 0; j < half; ++j) {
    const double angle = t / std::pow(10000.0, static_cast<double>(j) / half);
    d[j] = std::sin(angle);
    d[half + j] = std::cos(angle);
  }
  return d;
}

MatrixXd denoise_predict(const DenoiserParams& params, const DenoiserInput& input) {
  return forward(params, input, nullptr);
}

VectorXd denoise_predict(const DenoiserParams& params, const VectorXd& x_t, int t, const VectorXd& history,
                         const VectorXd& context) {
  DenoiserInput in{x_t, {t}, history, context};
  return forward(params, in, nullptr).col(0);
}

MatrixXd denoise_backward(const DenoiserParams& p, const DenoiserInput& in, const MatrixXd& d_output,
                          DenoiserGradients& g) {
  return denoise_backward(p, in, [&](const MatrixXd&) { return d_output; }, g);
}

MatrixXd denoise_backward(const DenoiserParams& p, const DenoiserInput& in,
                          const std::function<MatrixXd(const MatrixXd&)>& d_output_of, DenoiserGradients& g) {
  DenoiserTape tape;
  MatrixXd eps_hat = forward(p, in, &tape);
  const MatrixXd d_output = d_output_of(eps_hat);
  if (d_output.rows() != eps_hat.rows() || d_output.cols() != eps_hat.cols())
    throw Error("shape-mismatch", "output gradient shape differs from the prediction");
  const auto& cfg = p.config;
  const int L = cfg.length;
  const int C = cfg.channels;
  const Eigen::Index B = in.x.cols();
  const Eigen::Index N = L * B;

  if (g.params.blocks.size() != p.blocks.size()) g.params = zeros_like(p);
  auto& gp = g.params;

  const MatrixXd d_row = as_row(d_output);
  gp.final_w.noalias() += d_row * tape.skip_act.transpose();
  gp.final_b[0] += d_row.sum();
  MatrixXd d_skip_pre = (p.final_w.transpose() * d_row).cwiseProduct(
      tape.skip_pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
  gp.skip_w.noalias() += d_skip_pre * tape.skip_scaled.transpose();
  gp.skip_b += d_skip_pre.rowwise().sum();
  const MatrixXd d_skip = (p.skip_w.transpose() * d_skip_pre) / std::sqrt(static_cast<double>(p.blocks.size()));

  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  MatrixXd d_x = MatrixXd::Zero(C, N);
  MatrixXd d_cond = MatrixXd::Zero(2, N);
  MatrixXd d_e2 = MatrixXd::Zero(cfg.step_hidden, B);
  MatrixXd d_out(2 * C, N);
  for (int k = static_cast<int>(p.blocks.size()) - 1; k >= 0; --k) {
    const auto& blk = p.blocks[k];
    const auto& tb = tape.blocks[k];
    auto& gb = gp.blocks[k];
    const int d = cfg.dilation(k);

    d_out.topRows(C) = d_x * inv_sqrt2;
    d_out.bottomRows(C) = d_skip;
    gb.out_w.noalias() += d_out * tb.gated.transpose();
    gb.out_b += d_out.rowwise().sum();
    const MatrixXd d_gated = blk.out_w.transpose() * d_out;

    MatrixXd d_z(2 * C, N);
    d_z.topRows(C) = d_gated.cwiseProduct(tb.gate_tanh).cwiseProduct(
        tb.gate_sig.cwiseProduct((1.0 - tb.gate_sig.array()).matrix()));
    d_z.bottomRows(C) = d_gated.cwiseProduct(tb.gate_sig).cwiseProduct(
        (1.0 - tb.gate_tanh.array().square()).matrix());

    gb.conv_w.noalias() += d_z * tb.stacked.transpose();
    gb.conv_b += d_z.rowwise().sum();
    gb.cond_w.noalias() += d_z * tape.cond.transpose();
    gb.cond_b += d_z.rowwise().sum();
    d_cond.noalias() += blk.cond_w.transpose() * d_z;

    const MatrixXd d_stacked = blk.conv_w.transpose() * d_z;
    MatrixXd d_y = d_stacked.middleRows(C, C);
    d_y += shift_columns(d_stacked.topRows(C), L, d);
    d_y += shift_columns(d_stacked.bottomRows(C), L, -d);

    const MatrixXd d_step_bias = sum_per_example(d_y, L);
    gb.step_w.noalias() += d_step_bias * tape.step_e2.transpose();
    gb.step_b += d_step_bias.rowwise().sum();
    d_e2.noalias() += blk.step_w.transpose() * d_step_bias;

    d_x = d_x * inv_sqrt2 + d_y;
  }

  const MatrixXd d_input_pre =
      d_x.cwiseProduct(tape.input_pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
  gp.input_w.noalias() += d_input_pre * tape.x_row.transpose();
  gp.input_b += d_input_pre.rowwise().sum();

  const MatrixXd d_u2 = d_e2.cwiseProduct(swish_grad(tape.step_u2));
  gp.step_w2.noalias() += d_u2 * tape.step_e1.transpose();
  gp.step_b2 += d_u2.rowwise().sum();
  const MatrixXd d_u1 = (p.step_w2.transpose() * d_u2).cwiseProduct(swish_grad(tape.step_u1));
  gp.step_w1.noalias() += d_u1 * tape.fourier.transpose();
  gp.step_b1 += d_u1.rowwise().sum();

  const MatrixXd d_hs = Eigen::Map<const MatrixXd>(MatrixXd(d_cond.row(0)).data(), L, B);
  const MatrixXd d_cs = Eigen::Map<const MatrixXd>(MatrixXd(d_cond.row(1)).data(), L, B);
  gp.history_w.noalias() += d_hs * in.history.transpose();
  gp.history_b += d_hs.rowwise().sum();
  gp.context_w.noalias() += d_cs * in.context.transpose();
  gp.context_b += d_cs.rowwise().sum();
  g.d_history = p.history_w.transpose() * d_hs;
  g.d_context = p.context_w.transpose() * d_cs;
  return eps_hat;
}

}  // namespace appgen
