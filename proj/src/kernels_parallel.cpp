#include <cmath>

#include "souf/kernels.hpp"

namespace souf::kernels::parallel {

namespace {

constexpr float kLnEps = 1e-5F;
constexpr float kGeluC = 0.7978845608028654F;

using Strided = Eigen::OuterStride<>;
using ConstBlock = Eigen::Map<const Mat, 0, Strided>;
using Block = Eigen::Map<Mat, 0, Strided>;

}  // namespace

void gemm(const Mat& a, bool trans_a, const Mat& b, bool trans_b, Mat& c, float beta) {
  const Eigen::Index m = trans_a ? a.cols() : a.rows();
  const Eigen::Index k = trans_a ? a.rows() : a.cols();
  const Eigen::Index n = trans_b ? b.rows() : b.cols();
  if ((trans_b ? b.cols() : b.rows()) != k) throw InputError("gemm: inner dimension mismatch");
  // Eigen's blocked product is itself OpenMP-parallel when built with -fopenmp.
  if (beta == 0.0F) {
    c.resize(m, n);
    if (!trans_a && !trans_b) {
      c.noalias() = a * b;
    } else if (trans_a && !trans_b) {
      c.noalias() = a.transpose() * b;
    } else if (!trans_a && trans_b) {
      c.noalias() = a * b.transpose();
    } else {
      c.noalias() = a.transpose() * b.transpose();
    }
    return;
  }
  if (c.rows() != m || c.cols() != n) throw InputError("gemm: accumulator shape mismatch");
  if (beta != 1.0F) c *= beta;
  if (!trans_a && !trans_b) {
    c.noalias() += a * b;
  } else if (trans_a && !trans_b) {
    c.noalias() += a.transpose() * b;
  } else if (!trans_a && trans_b) {
    c.noalias() += a * b.transpose();
  } else {
    c.noalias() += a.transpose() * b.transpose();
  }
}

void add_row_bias(Mat& y, const Mat& bias) {
  const Eigen::Index n = y.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) y.row(i) += bias.row(0);
}

void accumulate_bias_grad(const Mat& dy, Mat& bias_grad) {
  bias_grad.row(0) += dy.colwise().sum();
}

void layernorm_forward(const Mat& x, const Mat& gamma, const Mat& beta, Mat& y,
                       Eigen::VectorXf& mean, Eigen::VectorXf& rstd) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  y.resize(n, d);
  mean.resize(n);
  rstd.resize(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const float mu = x.row(i).mean();
    const float var = (x.row(i).array() - mu).square().mean();
    const float rs = 1.0F / std::sqrt(var + kLnEps);
    mean(i) = mu;
    rstd(i) = rs;
    y.row(i) = ((x.row(i).array() - mu) * rs * gamma.row(0).array() + beta.row(0).array()).matrix();
  }
}

void layernorm_backward(const Mat& x, const Mat& gamma, const Eigen::VectorXf& mean,
                        const Eigen::VectorXf& rstd, const Mat& dy, Mat& dx, Mat& dgamma,
                        Mat& dbeta) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  dx.resize(n, d);
  Mat xhat(n, d);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    xhat.row(i) = ((x.row(i).array() - mean(i)) * rstd(i)).matrix();
    const Eigen::RowVectorXf g = (dy.row(i).array() * gamma.row(0).array()).matrix();
    const float sum_g = g.mean();
    const float sum_gx = g.cwiseProduct(xhat.row(i)).mean();
    dx.row(i) = (rstd(i) * (g.array() - sum_g - xhat.row(i).array() * sum_gx)).matrix();
  }
  dgamma.row(0) += dy.cwiseProduct(xhat).colwise().sum();
  dbeta.row(0) += dy.colwise().sum();
}

void gelu_forward(const Mat& u, Mat& g) {
  g.resize(u.rows(), u.cols());
  const Eigen::Index n = u.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto x = u.row(i).array();
    g.row(i) = (0.5F * x * (1.0F + (kGeluC * (x + 0.044715F * x.cube())).tanh())).matrix();
  }
}

void gelu_backward(const Mat& u, const Mat& dg, Mat& du) {
  du.resize(u.rows(), u.cols());
  const Eigen::Index n = u.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto x = u.row(i).array();
    const Eigen::ArrayXXf t = (kGeluC * (x + 0.044715F * x.cube())).tanh();
    const Eigen::ArrayXXf dt = (1.0F - t.square()) * kGeluC * (1.0F + 3.0F * 0.044715F * x.square());
    du.row(i) = (dg.row(i).array() * (0.5F * (1.0F + t) + 0.5F * x * dt)).matrix();
  }
}

void attention_forward(const Mat& qkv, const SeqShape& s, Mat& out, Mat& probs) {
  const int t = s.tokens;
  const int dh = s.head_dim();
  const Eigen::Index ld = qkv.cols();
  const float scale = 1.0F / std::sqrt(float(dh));
  out.resize(Eigen::Index(s.batch) * t, s.dim);
  probs.resize(Eigen::Index(s.batch) * s.heads * t, t);
  const int jobs = s.batch * s.heads;
#pragma omp parallel for schedule(static)
  for (int job = 0; job < jobs; ++job) {
    const int b = job / s.heads;
    const int h = job % s.heads;
    const float* base = qkv.data() + Eigen::Index(b) * t * ld;
    ConstBlock q(base + h * dh, t, dh, Strided(ld));
    ConstBlock k(base + s.dim + h * dh, t, dh, Strided(ld));
    ConstBlock v(base + 2 * s.dim + h * dh, t, dh, Strided(ld));
    auto a = probs.middleRows(Eigen::Index(job) * t, t);
    a.noalias() = (q * k.transpose()) * scale;
    for (int i = 0; i < t; ++i) {
      const float mx = a.row(i).maxCoeff();
      a.row(i) = (a.row(i).array() - mx).exp().matrix();
      a.row(i) /= a.row(i).sum();
    }
    Block o(out.data() + Eigen::Index(b) * t * s.dim + h * dh, t, dh, Strided(s.dim));
    o.noalias() = a * v;
  }
}

void attention_backward(const Mat& qkv, const Mat& probs, const Mat& dout, const SeqShape& s,
                        Mat& dqkv) {
  const int t = s.tokens;
  const int dh = s.head_dim();
  const Eigen::Index ld = qkv.cols();
  const float scale = 1.0F / std::sqrt(float(dh));
  dqkv.resize(qkv.rows(), qkv.cols());
  const int jobs = s.batch * s.heads;
#pragma omp parallel for schedule(static)
  for (int job = 0; job < jobs; ++job) {
    const int b = job / s.heads;
    const int h = job % s.heads;
    const Eigen::Index row0 = Eigen::Index(b) * t;
    const float* base = qkv.data() + row0 * ld;
    float* dbase = dqkv.data() + row0 * ld;
    ConstBlock q(base + h * dh, t, dh, Strided(ld));
    ConstBlock k(base + s.dim + h * dh, t, dh, Strided(ld));
    ConstBlock v(base + 2 * s.dim + h * dh, t, dh, Strided(ld));
    ConstBlock dout_h(dout.data() + row0 * s.dim + h * dh, t, dh, Strided(s.dim));
    Block dq(dbase + h * dh, t, dh, Strided(ld));
    Block dk(dbase + s.dim + h * dh, t, dh, Strided(ld));
    Block dv(dbase + 2 * s.dim + h * dh, t, dh, Strided(ld));
    const auto a = probs.middleRows(Eigen::Index(job) * t, t);

    dv.noalias() = a.transpose() * dout_h;
    Mat ds = dout_h * v.transpose();
    for (int i = 0; i < t; ++i) {
      const float dot = ds.row(i).dot(a.row(i));
      ds.row(i) = (a.row(i).array() * (ds.row(i).array() - dot) * scale).matrix();
    }
    dq.noalias() = ds * k;
    dk.noalias() = ds.transpose() * q;
  }
}

void softmax_rows(const Mat& logits, MatD& probs) {
  probs = logits.cast<double>();
  const Eigen::Index n = probs.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = probs.row(i).maxCoeff();
    probs.row(i) = (probs.row(i).array() - mx).exp().matrix();
    probs.row(i) /= probs.row(i).sum();
  }
}

}  // namespace souf::kernels::parallel
