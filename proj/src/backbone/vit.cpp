#include "souf/backbone/vit.hpp"

#include <cmath>
#include <random>

namespace souf::backbone {

namespace {

constexpr double kInitStd = 0.02;
// Pixels are centred and scaled before the patch projection.
constexpr float kPixelMean = 0.5F;
constexpr float kPixelScale = 4.0F;

Param make_param(std::string name, int rows, int cols, std::mt19937_64* rng, float fill = 0.0F,
                 double stddev = kInitStd) {
  Param p;
  p.name = std::move(name);
  p.value.resize(rows, cols);
  if (rng != nullptr) {
    std::normal_distribution<float> dist(0.0F, float(stddev));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(*rng);
  } else {
    p.value.setConstant(fill);
  }
  p.grad.setZero(rows, cols);
  return p;
}

std::uint64_t hash_mat(const Mat& m, std::uint64_t h) {
  return fnv1a(std::as_bytes(std::span(m.data(), std::size_t(m.size()))), h);
}

}  // namespace

void EncoderConfig::validate() const {
  if (patch_size < 1 || image_size % patch_size != 0)
    throw ConfigError("image_size must be a multiple of patch_size", "patch_size");
  if (num_patches() < 2) throw ConfigError("encoder needs at least two patches", "patch_size");
  if (heads < 1 || embed_dim % heads != 0)
    throw ConfigError("embed_dim must be divisible by heads", "heads");
  if (depth < 1) throw ConfigError("depth must be >= 1", "depth");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2", "num_classes");
  if (channels < 1) throw ConfigError("channels must be >= 1", "channels");
  if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1", "mlp_ratio");
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"image_size", image_size}, {"channels", channels},   {"patch_size", patch_size},
          {"embed_dim", embed_dim},   {"depth", depth},         {"heads", heads},
          {"mlp_ratio", mlp_ratio},   {"num_classes", num_classes}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.image_size = j.at("image_size").get<int>();
  c.channels = j.at("channels").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.depth = j.at("depth").get<int>();
  c.heads = j.at("heads").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.validate();
  return c;
}

AttentionSummary ForwardBatch::attention_of(int row) const {
  AttentionSummary s;
  s.scores.resize(std::size_t(attention.cols()));
  for (Eigen::Index n = 0; n < attention.cols(); ++n) s.scores[std::size_t(n)] = attention(row, n);
  return s;
}

VisionTransformer::VisionTransformer(const EncoderConfig& config, std::uint64_t seed,
                                     kernels::Exec exec)
    : config_(config), kernels_(exec) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int d = config_.embed_dim;
  const int hidden = d * config_.mlp_ratio;
  patch_w_ = make_param("patch_embed.weight", config_.patch_dim(), d, &rng, 0.0F,
                        1.0 / std::sqrt(double(config_.patch_dim())));
  patch_b_ = make_param("patch_embed.bias", 1, d, nullptr);
  cls_token_ = make_param("cls_token", 1, d, &rng);
  pos_embed_ = make_param("pos_embed", config_.tokens(), d, &rng);
  for (int l = 0; l < config_.depth; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    Block b;
    b.ln1_g = make_param(p + "norm1.weight", 1, d, nullptr, 1.0F);
    b.ln1_b = make_param(p + "norm1.bias", 1, d, nullptr);
    b.qkv_w = make_param(p + "attn.qkv.weight", d, 3 * d, &rng);
    b.qkv_b = make_param(p + "attn.qkv.bias", 1, 3 * d, nullptr);
    b.proj_w = make_param(p + "attn.proj.weight", d, d, &rng);
    b.proj_b = make_param(p + "attn.proj.bias", 1, d, nullptr);
    b.ln2_g = make_param(p + "norm2.weight", 1, d, nullptr, 1.0F);
    b.ln2_b = make_param(p + "norm2.bias", 1, d, nullptr);
    b.fc1_w = make_param(p + "mlp.fc1.weight", d, hidden, &rng);
    b.fc1_b = make_param(p + "mlp.fc1.bias", 1, hidden, nullptr);
    b.fc2_w = make_param(p + "mlp.fc2.weight", hidden, d, &rng);
    b.fc2_b = make_param(p + "mlp.fc2.bias", 1, d, nullptr);
    blocks_.push_back(std::move(b));
  }
  norm_g_ = make_param("norm.weight", 1, d, nullptr, 1.0F);
  norm_b_ = make_param("norm.bias", 1, d, nullptr);
  head_w_ = make_param("head.weight", d, config_.num_classes, &rng);
  head_b_ = make_param("head.bias", 1, config_.num_classes, nullptr);
  head_w_.classifier = true;
  head_b_.classifier = true;
}

std::vector<Param*> VisionTransformer::parameters() {
  std::vector<Param*> out{&patch_w_, &patch_b_, &cls_token_, &pos_embed_};
  for (auto& b : blocks_) {
    for (Param* p : {&b.ln1_g, &b.ln1_b, &b.qkv_w, &b.qkv_b, &b.proj_w, &b.proj_b, &b.ln2_g,
                     &b.ln2_b, &b.fc1_w, &b.fc1_b, &b.fc2_w, &b.fc2_b})
      out.push_back(p);
  }
  for (Param* p : {&norm_g_, &norm_b_, &head_w_, &head_b_}) out.push_back(p);
  return out;
}

std::vector<const Param*> VisionTransformer::parameters() const {
  auto mutable_list = const_cast<VisionTransformer*>(this)->parameters();
  return {mutable_list.begin(), mutable_list.end()};
}

void VisionTransformer::zero_grad() {
  for (Param* p : parameters()) p->grad.setZero();
}

std::uint64_t VisionTransformer::classifier_hash() const {
  return hash_mat(head_b_.value, hash_mat(head_w_.value, fnv1a(std::string_view{})));
}

std::uint64_t VisionTransformer::parameter_hash() const {
  std::uint64_t h = fnv1a(std::string_view{});
  for (const Param* p : parameters()) h = hash_mat(p->value, h);
  return h;
}

void VisionTransformer::extract_patches(std::span<const data::Image> images, Mat& patches) const {
  const int m = config_.num_patches();
  const int p = config_.patch_size;
  const int grid = config_.grid();
  const auto batch = static_cast<int>(images.size());
  patches.resize(Eigen::Index(batch) * m, config_.patch_dim());
#pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b) {
    const data::Image& img = images[std::size_t(b)];
    for (int n = 0; n < m; ++n) {
      const int py = n / grid;
      const int px = n % grid;
      float* row = patches.data() + (Eigen::Index(b) * m + n) * patches.cols();
      for (int c = 0; c < config_.channels; ++c)
        for (int dy = 0; dy < p; ++dy)
          for (int dx = 0; dx < p; ++dx) *row++ = (img.at(c, py * p + dy, px * p + dx) - kPixelMean) * kPixelScale;
    }
  }
}

ForwardBatch VisionTransformer::forward(std::span<const data::Image> images,
                                        ForwardCache* cache) const {
  const auto batch = static_cast<int>(images.size());
  if (batch == 0) throw InputError("forward: empty batch");
  for (const auto& img : images)
    if (img.channels != config_.channels || img.height != config_.image_size ||
        img.width != config_.image_size)
      throw InputError("forward: image shape does not match the encoder config");

  const int m = config_.num_patches();
  const int t = config_.tokens();
  const int d = config_.embed_dim;
  const kernels::SeqShape shape{batch, t, config_.heads, d};

  ForwardCache local;
  ForwardCache& c = cache != nullptr ? *cache : local;
  c = ForwardCache{};
  c.batch = batch;
  extract_patches(images, c.patches);

  Mat tokens;
  kernels_.gemm(c.patches, false, patch_w_.value, false, tokens, 0.0F);
  kernels_.add_row_bias(tokens, patch_b_.value);
  Mat x(Eigen::Index(batch) * t, d);
  for (int b = 0; b < batch; ++b) {
    x.row(Eigen::Index(b) * t) = cls_token_.value.row(0) + pos_embed_.value.row(0);
    x.middleRows(Eigen::Index(b) * t + 1, m) =
        tokens.middleRows(Eigen::Index(b) * m, m) + pos_embed_.value.bottomRows(m);
  }

  ForwardBatch out;
  out.attention.setZero(batch, m);
  const float attn_norm = 1.0F / float(config_.depth * config_.heads);
  c.layers.resize(std::size_t(config_.depth));
  for (int l = 0; l < config_.depth; ++l) {
    const Block& blk = blocks_[std::size_t(l)];
    auto& L = c.layers[std::size_t(l)];
    L.x_in = std::move(x);
    kernels_.layernorm_forward(L.x_in, blk.ln1_g.value, blk.ln1_b.value, L.ln1, L.ln1_mean,
                               L.ln1_rstd);
    kernels_.gemm(L.ln1, false, blk.qkv_w.value, false, L.qkv, 0.0F);
    kernels_.add_row_bias(L.qkv, blk.qkv_b.value);
    kernels_.attention_forward(L.qkv, shape, L.attn, L.probs);
    L.x_mid = L.x_in;
    kernels_.gemm(L.attn, false, blk.proj_w.value, false, L.x_mid, 1.0F);
    kernels_.add_row_bias(L.x_mid, blk.proj_b.value);
    kernels_.layernorm_forward(L.x_mid, blk.ln2_g.value, blk.ln2_b.value, L.ln2, L.ln2_mean,
                               L.ln2_rstd);
    kernels_.gemm(L.ln2, false, blk.fc1_w.value, false, L.pre_act, 0.0F);
    kernels_.add_row_bias(L.pre_act, blk.fc1_b.value);
    kernels_.gelu_forward(L.pre_act, L.act);
    x = L.x_mid;
    kernels_.gemm(L.act, false, blk.fc2_w.value, false, x, 1.0F);
    kernels_.add_row_bias(x, blk.fc2_b.value);

    for (int b = 0; b < batch; ++b)
      for (int h = 0; h < config_.heads; ++h) {
        const Eigen::Index cls_row = (Eigen::Index(b) * config_.heads + h) * t;
        out.attention.row(b) += L.probs.row(cls_row).tail(m) * attn_norm;
      }
  }

  c.cls_out.resize(batch, d);
  for (int b = 0; b < batch; ++b) c.cls_out.row(b) = x.row(Eigen::Index(b) * t);
  kernels_.layernorm_forward(c.cls_out, norm_g_.value, norm_b_.value, c.features, c.lnf_mean,
                             c.lnf_rstd);
  out.features = c.features;
  kernels_.gemm(out.features, false, head_w_.value, false, out.logits, 0.0F);
  kernels_.add_row_bias(out.logits, head_b_.value);
  kernels_.softmax_rows(out.logits, out.probs);
  return out;
}

void VisionTransformer::backward(const ForwardCache& c, const Mat& dlogits) {
  const int batch = c.batch;
  if (dlogits.rows() != batch || dlogits.cols() != config_.num_classes)
    throw InputError("backward: dlogits shape mismatch");
  const int m = config_.num_patches();
  const int t = config_.tokens();
  const int d = config_.embed_dim;
  const kernels::SeqShape shape{batch, t, config_.heads, d};

  if (!classifier_frozen_) {
    kernels_.gemm(c.features, true, dlogits, false, head_w_.grad, 1.0F);
    kernels_.accumulate_bias_grad(dlogits, head_b_.grad);
  }
  Mat dfeat;
  kernels_.gemm(dlogits, false, head_w_.value, true, dfeat, 0.0F);
  Mat dcls;
  kernels_.layernorm_backward(c.cls_out, norm_g_.value, c.lnf_mean, c.lnf_rstd, dfeat, dcls,
                              norm_g_.grad, norm_b_.grad);

  Mat dx = Mat::Zero(Eigen::Index(batch) * t, d);
  for (int b = 0; b < batch; ++b) dx.row(Eigen::Index(b) * t) = dcls.row(b);

  Mat tmp, dsub;
  for (int l = config_.depth - 1; l >= 0; --l) {
    Block& blk = blocks_[std::size_t(l)];
    const auto& L = c.layers[std::size_t(l)];
    // x_out = x_mid + gelu(ln2(x_mid) W1 + b1) W2 + b2
    kernels_.gemm(L.act, true, dx, false, blk.fc2_w.grad, 1.0F);
    kernels_.accumulate_bias_grad(dx, blk.fc2_b.grad);
    kernels_.gemm(dx, false, blk.fc2_w.value, true, tmp, 0.0F);
    kernels_.gelu_backward(L.pre_act, tmp, dsub);
    kernels_.gemm(L.ln2, true, dsub, false, blk.fc1_w.grad, 1.0F);
    kernels_.accumulate_bias_grad(dsub, blk.fc1_b.grad);
    kernels_.gemm(dsub, false, blk.fc1_w.value, true, tmp, 0.0F);
    kernels_.layernorm_backward(L.x_mid, blk.ln2_g.value, L.ln2_mean, L.ln2_rstd, tmp, dsub,
                                blk.ln2_g.grad, blk.ln2_b.grad);
    dx += dsub;
    // x_mid = x_in + attn(ln1(x_in)) Wp + bp
    kernels_.gemm(L.attn, true, dx, false, blk.proj_w.grad, 1.0F);
    kernels_.accumulate_bias_grad(dx, blk.proj_b.grad);
    kernels_.gemm(dx, false, blk.proj_w.value, true, tmp, 0.0F);
    kernels_.attention_backward(L.qkv, L.probs, tmp, shape, dsub);
    kernels_.gemm(L.ln1, true, dsub, false, blk.qkv_w.grad, 1.0F);
    kernels_.accumulate_bias_grad(dsub, blk.qkv_b.grad);
    kernels_.gemm(dsub, false, blk.qkv_w.value, true, tmp, 0.0F);
    kernels_.layernorm_backward(L.x_in, blk.ln1_g.value, L.ln1_mean, L.ln1_rstd, tmp, dsub,
                                blk.ln1_g.grad, blk.ln1_b.grad);
    dx += dsub;
  }

  Mat dtokens(Eigen::Index(batch) * m, d);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index r = Eigen::Index(b) * t;
    cls_token_.grad.row(0) += dx.row(r);
    pos_embed_.grad += dx.middleRows(r, t);
    dtokens.middleRows(Eigen::Index(b) * m, m) = dx.middleRows(r + 1, m);
  }
  kernels_.gemm(c.patches, true, dtokens, false, patch_w_.grad, 1.0F);
  kernels_.accumulate_bias_grad(dtokens, patch_b_.grad);
}

Mat softmax_backward(const MatD& probs, const MatD& dprobs) {
  Mat out(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const double dot = probs.row(i).dot(dprobs.row(i));
    out.row(i) = (probs.row(i).array() * (dprobs.row(i).array() - dot)).cast<float>().matrix();
  }
  return out;
}

std::vector<int> argmax_rows(const MatD& probs) {
  std::vector<int> out(std::size_t(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (Eigen::Index j = 1; j < probs.cols(); ++j)
      if (probs(i, j) > probs(i, best)) best = int(j);
    out[std::size_t(i)] = best;
  }
  return out;
}

}  // namespace souf::backbone
