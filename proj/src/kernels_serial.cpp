// Reference kernels: straightforward loops with double accumulators. Used by
// tests to cross-check the parallel kernels and by the benchmark as baseline.

#include <algorithm>
#include <cmath>
#include <vector>

#include "souf/kernels.hpp"

namespace souf::kernels::serial {

namespace {

constexpr float kLnEps = 1e-5F;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

float at(const Mat& m, bool trans, Eigen::Index r, Eigen::Index c) {
  return trans ? m(c, r) : m(r, c);
}

}  // namespace

void gemm(const Mat& a, bool trans_a, const Mat& b, bool trans_b, Mat& c, float beta) {
  const Eigen::Index m = trans_a ? a.cols() : a.rows();
  const Eigen::Index k = trans_a ? a.rows() : a.cols();
  const Eigen::Index n = trans_b ? b.rows() : b.cols();
  if ((trans_b ? b.cols() : b.rows()) != k) throw InputError("gemm: inner dimension mismatch");
  if (beta == 0.0F) {
    c.setZero(m, n);
  } else if (c.rows() != m || c.cols() != n) {
    throw InputError("gemm: accumulator shape mismatch");
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double acc = 0.0;
      for (Eigen::Index p = 0; p < k; ++p) acc += double(at(a, trans_a, i, p)) * at(b, trans_b, p, j);
      c(i, j) = static_cast<float>(beta * c(i, j) + acc);
    }
  }
}

void add_row_bias(Mat& y, const Mat& bias) {
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = 0; j < y.cols(); ++j) y(i, j) += bias(0, j);
}

void accumulate_bias_grad(const Mat& dy, Mat& bias_grad) {
  for (Eigen::Index j = 0; j < dy.cols(); ++j) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < dy.rows(); ++i) acc += dy(i, j);
    bias_grad(0, j) += static_cast<float>(acc);
  }
}

void layernorm_forward(const Mat& x, const Mat& gamma, const Mat& beta, Mat& y,
                       Eigen::VectorXf& mean, Eigen::VectorXf& rstd) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  y.resize(n, d);
  mean.resize(n);
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mu = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) mu += x(i, j);
    mu /= double(d);
    double var = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
    var /= double(d);
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    mean(i) = static_cast<float>(mu);
    rstd(i) = static_cast<float>(rs);
    for (Eigen::Index j = 0; j < d; ++j)
      y(i, j) = static_cast<float>((x(i, j) - mu) * rs * gamma(0, j) + beta(0, j));
  }
}

void layernorm_backward(const Mat& x, const Mat& gamma, const Eigen::VectorXf& mean,
                        const Eigen::VectorXf& rstd, const Mat& dy, Mat& dx, Mat& dgamma,
                        Mat& dbeta) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  dx.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double xhat = (x(i, j) - mean(i)) * double(rstd(i));
      const double g = double(dy(i, j)) * gamma(0, j);
      sum_g += g;
      sum_gx += g * xhat;
    }
    sum_g /= double(d);
    sum_gx /= double(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double xhat = (x(i, j) - mean(i)) * double(rstd(i));
      const double g = double(dy(i, j)) * gamma(0, j);
      dx(i, j) = static_cast<float>(rstd(i) * (g - sum_g - xhat * sum_gx));
    }
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    double gg = 0.0;
    double gb = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double xhat = (x(i, j) - mean(i)) * double(rstd(i));
      gg += dy(i, j) * xhat;
      gb += dy(i, j);
    }
    dgamma(0, j) += static_cast<float>(gg);
    dbeta(0, j) += static_cast<float>(gb);
  }
}

void gelu_forward(const Mat& u, Mat& g) {
  g.resize(u.rows(), u.cols());
  for (Eigen::Index i = 0; i < u.rows(); ++i)
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
      const double x = u(i, j);
      g(i, j) = static_cast<float>(0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x))));
    }
}

void gelu_backward(const Mat& u, const Mat& dg, Mat& du) {
  du.resize(u.rows(), u.cols());
  for (Eigen::Index i = 0; i < u.rows(); ++i)
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
      const double x = u(i, j);
      const double t = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
      const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
      du(i, j) = static_cast<float>(dg(i, j) * (0.5 * (1.0 + t) + 0.5 * x * dt));
    }
}

void attention_forward(const Mat& qkv, const SeqShape& s, Mat& out, Mat& probs) {
  const int t = s.tokens;
  const int dh = s.head_dim();
  const double scale = 1.0 / std::sqrt(double(dh));
  out.setZero(Eigen::Index(s.batch) * t, s.dim);
  probs.resize(Eigen::Index(s.batch) * s.heads * t, t);
  std::vector<double> row(static_cast<std::size_t>(t));
  for (int b = 0; b < s.batch; ++b) {
    for (int h = 0; h < s.heads; ++h) {
      const Eigen::Index base = Eigen::Index(b) * t;
      const int qo = h * dh;
      const int ko = s.dim + h * dh;
      const int vo = 2 * s.dim + h * dh;
      for (int i = 0; i < t; ++i) {
        double mx = -1e300;
        for (int j = 0; j < t; ++j) {
          double acc = 0.0;
          for (int e = 0; e < dh; ++e) acc += double(qkv(base + i, qo + e)) * qkv(base + j, ko + e);
          row[j] = acc * scale;
          mx = std::max(mx, row[j]);
        }
        double z = 0.0;
        for (int j = 0; j < t; ++j) {
          row[j] = std::exp(row[j] - mx);
          z += row[j];
        }
        const Eigen::Index pr = (Eigen::Index(b) * s.heads + h) * t + i;
        for (int j = 0; j < t; ++j) probs(pr, j) = static_cast<float>(row[j] / z);
        for (int e = 0; e < dh; ++e) {
          double acc = 0.0;
          for (int j = 0; j < t; ++j) acc += (row[j] / z) * qkv(base + j, vo + e);
          out(base + i, qo + e) = static_cast<float>(acc);
        }
      }
    }
  }
}

void attention_backward(const Mat& qkv, const Mat& probs, const Mat& dout, const SeqShape& s,
                        Mat& dqkv) {
  const int t = s.tokens;
  const int dh = s.head_dim();
  const double scale = 1.0 / std::sqrt(double(dh));
  dqkv.setZero(qkv.rows(), qkv.cols());
  std::vector<double> da(static_cast<std::size_t>(t));
  for (int b = 0; b < s.batch; ++b) {
    for (int h = 0; h < s.heads; ++h) {
      const Eigen::Index base = Eigen::Index(b) * t;
      const int qo = h * dh;
      const int ko = s.dim + h * dh;
      const int vo = 2 * s.dim + h * dh;
      for (int i = 0; i < t; ++i) {
        const Eigen::Index pr = (Eigen::Index(b) * s.heads + h) * t + i;
        double dot = 0.0;
        for (int j = 0; j < t; ++j) {
          double acc = 0.0;
          for (int e = 0; e < dh; ++e) acc += double(dout(base + i, qo + e)) * qkv(base + j, vo + e);
          da[j] = acc;
          dot += acc * probs(pr, j);
        }
        for (int j = 0; j < t; ++j) {
          const double a = probs(pr, j);
          // dV_j += a_ij * dO_i
          for (int e = 0; e < dh; ++e) dqkv(base + j, vo + e) += static_cast<float>(a * dout(base + i, qo + e));
          const double ds = a * (da[j] - dot) * scale;
          for (int e = 0; e < dh; ++e) {
            dqkv(base + i, qo + e) += static_cast<float>(ds * qkv(base + j, ko + e));
            dqkv(base + j, ko + e) += static_cast<float>(ds * qkv(base + i, qo + e));
          }
        }
      }
    }
  }
}

void softmax_rows(const Mat& logits, MatD& probs) {
  probs.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = -1e300;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) mx = std::max(mx, double(logits(i, j)));
    double z = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      probs(i, j) = std::exp(double(logits(i, j)) - mx);
      z += probs(i, j);
    }
    for (Eigen::Index j = 0; j < logits.cols(); ++j) probs(i, j) /= z;
  }
}

}  // namespace souf::kernels::serial
