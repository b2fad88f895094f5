// Serial reference vs parallel kernels at the default encoder's shapes.
// Arg 0 selects the kernel set: 0 serial, 1 parallel.

#include <benchmark/benchmark.h>

#include <random>

#include "souf/backbone/vit.hpp"
#include "souf/kernels.hpp"

using namespace souf;
using kernels::Exec;

namespace {

constexpr int kSeqs = 64, kTokens = 65, kDim = 128, kHeads = 4;
constexpr int kRows = kSeqs * kTokens;

Mat random_mat(Eigen::Index r, Eigen::Index c, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> n(0.0F, 1.0F);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::parallel : Exec::serial; }

void label(benchmark::State& st) { st.SetLabel(st.range(0) ? "parallel" : "serial"); }

void BM_Gemm(benchmark::State& st) {
  const kernels::Kernels k(exec_of(st));
  const Mat a = random_mat(kRows, kDim, 1), b = random_mat(kDim, 4 * kDim, 2);
  Mat c(kRows, 4 * kDim);
  for (auto _ : st) {
    k.gemm(a, false, b, false, c, 0.0F);
    benchmark::DoNotOptimize(c.data());
  }
  st.SetItemsProcessed(st.iterations() * 2LL * kRows * kDim * 4 * kDim);
  label(st);
}

void BM_GemmTransA(benchmark::State& st) {
  // Weight gradient shape: x^T dy.
  const kernels::Kernels k(exec_of(st));
  const Mat a = random_mat(kRows, kDim, 3), b = random_mat(kRows, 4 * kDim, 4);
  Mat c = Mat::Zero(kDim, 4 * kDim);
  for (auto _ : st) {
    k.gemm(a, true, b, false, c, 1.0F);
    benchmark::DoNotOptimize(c.data());
  }
  st.SetItemsProcessed(st.iterations() * 2LL * kRows * kDim * 4 * kDim);
  label(st);
}

void BM_LayerNorm(benchmark::State& st) {
  const kernels::Kernels k(exec_of(st));
  const Mat x = random_mat(kRows, kDim, 5), dy = random_mat(kRows, kDim, 6);
  const Mat gamma = Mat::Ones(1, kDim), beta = Mat::Zero(1, kDim);
  Mat y, dx, dg = Mat::Zero(1, kDim), db = Mat::Zero(1, kDim);
  Eigen::VectorXf mean, rstd;
  for (auto _ : st) {
    k.layernorm_forward(x, gamma, beta, y, mean, rstd);
    k.layernorm_backward(x, gamma, mean, rstd, dy, dx, dg, db);
    benchmark::DoNotOptimize(dx.data());
  }
  label(st);
}

void BM_Gelu(benchmark::State& st) {
  const kernels::Kernels k(exec_of(st));
  const Mat u = random_mat(kRows, 4 * kDim, 7), dg = random_mat(kRows, 4 * kDim, 8);
  Mat g, du;
  for (auto _ : st) {
    k.gelu_forward(u, g);
    k.gelu_backward(u, dg, du);
    benchmark::DoNotOptimize(du.data());
  }
  label(st);
}

void BM_Attention(benchmark::State& st) {
  const kernels::Kernels k(exec_of(st));
  const kernels::SeqShape s{kSeqs, kTokens, kHeads, kDim};
  const Mat qkv = random_mat(kRows, 3 * kDim, 9), dout = random_mat(kRows, kDim, 10);
  Mat out, probs, dqkv;
  for (auto _ : st) {
    k.attention_forward(qkv, s, out, probs);
    k.attention_backward(qkv, probs, dout, s, dqkv);
    benchmark::DoNotOptimize(dqkv.data());
  }
  label(st);
}

void BM_EncoderStep(benchmark::State& st) {
  backbone::EncoderConfig cfg;
  backbone::VisionTransformer model(cfg, 1, exec_of(st));
  std::mt19937 rng(11);
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  std::vector<data::Image> images;
  for (int i = 0; i < kSeqs; ++i) {
    data::Image im(cfg.channels, cfg.image_size, cfg.image_size);
    for (auto& p : im.pixels) p = u(rng);
    images.push_back(std::move(im));
  }
  const Mat dlogits = random_mat(kSeqs, cfg.num_classes, 12);
  for (auto _ : st) {
    backbone::ForwardCache cache;
    const auto fb = model.forward(images, &cache);
    model.zero_grad();
    model.backward(cache, dlogits);
    benchmark::DoNotOptimize(fb.probs.data());
  }
  st.SetItemsProcessed(st.iterations() * kSeqs);
  label(st);
}

}  // namespace

BENCHMARK(BM_Gemm)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GemmTransA)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LayerNorm)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gelu)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Attention)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EncoderStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
