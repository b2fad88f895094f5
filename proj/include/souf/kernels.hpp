#pragma once

// Dense kernels behind the encoder. Every kernel has a plain-loop serial
// reference and an OpenMP/vectorized version with the same signature; the
// encoder selects one through `Exec`. Parallel kernels only split work over
// independent outputs, so results do not depend on the thread count.

#include "souf/common.hpp"

namespace souf::kernels {

enum class Exec { serial, parallel };

/// Shape of a batch of token sequences packed as [batch * tokens, dim] rows.
struct SeqShape {
  int batch = 0;
  int tokens = 0;
  int heads = 0;
  int dim = 0;
  int head_dim() const { return dim / heads; }
};

#define SOUF_KERNEL_DECLS                                                                   \
  /* c = op(a) * op(b) + beta * c */                                                        \
  void gemm(const Mat& a, bool trans_a, const Mat& b, bool trans_b, Mat& c, float beta);     \
  void add_row_bias(Mat& y, const Mat& bias);                                               \
  /* bias_grad += column sums of dy */                                                      \
  void accumulate_bias_grad(const Mat& dy, Mat& bias_grad);                                 \
  void layernorm_forward(const Mat& x, const Mat& gamma, const Mat& beta, Mat& y,           \
                         Eigen::VectorXf& mean, Eigen::VectorXf& rstd);                     \
  void layernorm_backward(const Mat& x, const Mat& gamma, const Eigen::VectorXf& mean,      \
                          const Eigen::VectorXf& rstd, const Mat& dy, Mat& dx,              \
                          Mat& dgamma, Mat& dbeta);                                         \
  void gelu_forward(const Mat& u, Mat& g);                                                  \
  void gelu_backward(const Mat& u, const Mat& dg, Mat& du);                                 \
  /* qkv: [B*T, 3D]; out: [B*T, D]; probs: [B*H*T, T] */                                    \
  void attention_forward(const Mat& qkv, const SeqShape& s, Mat& out, Mat& probs);          \
  void attention_backward(const Mat& qkv, const Mat& probs, const Mat& dout,                \
                          const SeqShape& s, Mat& dqkv);                                    \
  void softmax_rows(const Mat& logits, MatD& probs);

namespace serial {
SOUF_KERNEL_DECLS
}  // namespace serial

namespace parallel {
SOUF_KERNEL_DECLS
}  // namespace parallel

#undef SOUF_KERNEL_DECLS

/// Runtime dispatch to one of the two kernel sets.
class Kernels {
 public:
  explicit Kernels(Exec exec = Exec::parallel) : exec_(exec) {}
  Exec exec() const { return exec_; }

  void gemm(const Mat& a, bool ta, const Mat& b, bool tb, Mat& c, float beta) const {
    exec_ == Exec::serial ? serial::gemm(a, ta, b, tb, c, beta)
                          : parallel::gemm(a, ta, b, tb, c, beta);
  }
  void add_row_bias(Mat& y, const Mat& bias) const {
    exec_ == Exec::serial ? serial::add_row_bias(y, bias) : parallel::add_row_bias(y, bias);
  }
  void accumulate_bias_grad(const Mat& dy, Mat& g) const {
    exec_ == Exec::serial ? serial::accumulate_bias_grad(dy, g)
                          : parallel::accumulate_bias_grad(dy, g);
  }
  void layernorm_forward(const Mat& x, const Mat& gamma, const Mat& beta, Mat& y,
                         Eigen::VectorXf& mean, Eigen::VectorXf& rstd) const {
    exec_ == Exec::serial ? serial::layernorm_forward(x, gamma, beta, y, mean, rstd)
                          : parallel::layernorm_forward(x, gamma, beta, y, mean, rstd);
  }
  void layernorm_backward(const Mat& x, const Mat& gamma, const Eigen::VectorXf& mean,
                          const Eigen::VectorXf& rstd, const Mat& dy, Mat& dx, Mat& dgamma,
                          Mat& dbeta) const {
    exec_ == Exec::serial
        ? serial::layernorm_backward(x, gamma, mean, rstd, dy, dx, dgamma, dbeta)
        : parallel::layernorm_backward(x, gamma, mean, rstd, dy, dx, dgamma, dbeta);
  }
  void gelu_forward(const Mat& u, Mat& g) const {
    exec_ == Exec::serial ? serial::gelu_forward(u, g) : parallel::gelu_forward(u, g);
  }
  void gelu_backward(const Mat& u, const Mat& dg, Mat& du) const {
    exec_ == Exec::serial ? serial::gelu_backward(u, dg, du)
                          : parallel::gelu_backward(u, dg, du);
  }
  void attention_forward(const Mat& qkv, const SeqShape& s, Mat& out, Mat& probs) const {
    exec_ == Exec::serial ? serial::attention_forward(qkv, s, out, probs)
                          : parallel::attention_forward(qkv, s, out, probs);
  }
  void attention_backward(const Mat& qkv, const Mat& probs, const Mat& dout, const SeqShape& s,
                          Mat& dqkv) const {
    exec_ == Exec::serial ? serial::attention_backward(qkv, probs, dout, s, dqkv)
                          : parallel::attention_backward(qkv, probs, dout, s, dqkv);
  }
  void softmax_rows(const Mat& logits, MatD& probs) const {
    exec_ == Exec::serial ? serial::softmax_rows(logits, probs)
                          : parallel::softmax_rows(logits, probs);
  }

 private:
  Exec exec_;
};

}  // namespace souf::kernels
