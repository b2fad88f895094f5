#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "souf/common.hpp"
#include "souf/data/dataset.hpp"
#include "souf/kernels.hpp"

namespace souf::backbone {

struct EncoderConfig {
  int image_size = 32;
  int channels = 3;
  int patch_size = 4;
  int embed_dim = 128;
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 4;
  int num_classes = 4;

  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }
  int tokens() const { return num_patches() + 1; }
  int patch_dim() const { return channels * patch_size * patch_size; }

  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const EncoderConfig&) const = default;
};

/// Class-token attention per patch, averaged over layers and heads.
struct AttentionSummary {
  std::vector<double> scores;
};

/// Named trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Mat value;
  Mat grad;
  bool classifier = false;
};

/// Per-batch outputs of a forward pass. Row b of each matrix is sample b.
struct ForwardBatch {
  Mat features;   // [B, D] final-norm class token
  Mat logits;     // [B, C]
  MatD probs;     // [B, C] softmax(logits)
  Mat attention;  // [B, m]

  int size() const { return static_cast<int>(logits.rows()); }
  AttentionSummary attention_of(int row) const;
};

/// Activations kept from `forward` for `backward`.
struct ForwardCache {
  struct Layer {
    Mat x_in;
    Mat ln1;
    Eigen::VectorXf ln1_mean, ln1_rstd;
    Mat qkv;
    Mat probs;
    Mat attn;
    Mat x_mid;
    Mat ln2;
    Eigen::VectorXf ln2_mean, ln2_rstd;
    Mat pre_act;
    Mat act;
  };
  int batch = 0;
  Mat patches;  // [B*m, patch_dim]
  std::vector<Layer> layers;
  Mat cls_out;  // [B, D] class-token rows after the last block
  Eigen::VectorXf lnf_mean, lnf_rstd;
  Mat features;
};

/// Patch-based transformer encoder g() with a linear classifier f() on the
/// class token. Pre-norm blocks, GELU MLP, learned position embeddings.
class VisionTransformer {
 public:
  VisionTransformer() = default;
  VisionTransformer(const EncoderConfig& config, std::uint64_t seed,
                    kernels::Exec exec = kernels::Exec::parallel);

  const EncoderConfig& config() const { return config_; }
  kernels::Exec exec() const { return kernels_.exec(); }
  void set_exec(kernels::Exec exec) { kernels_ = kernels::Kernels(exec); }

  /// Runs the batch; fills `cache` for a later `backward` when given. Does not
  /// modify the model.
  ForwardBatch forward(std::span<const data::Image> images, ForwardCache* cache = nullptr) const;

  /// Accumulates parameter gradients for d(loss)/d(logits). Classifier
  /// gradients are skipped while the classifier is frozen; the gradient still
  /// flows through it into the encoder.
  void backward(const ForwardCache& cache, const Mat& dlogits);

  void zero_grad();
  std::vector<Param*> parameters();
  std::vector<const Param*> parameters() const;

  void freeze_classifier() { classifier_frozen_ = true; }
  void unfreeze_classifier() { classifier_frozen_ = false; }
  bool classifier_frozen() const { return classifier_frozen_; }

  /// FNV-1a over the classifier weight and bias bytes.
  std::uint64_t classifier_hash() const;
  /// FNV-1a over every parameter.
  std::uint64_t parameter_hash() const;

 private:
  struct Block {
    Param ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b;
    Param ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };

  void extract_patches(std::span<const data::Image> images, Mat& patches) const;

  EncoderConfig config_;
  kernels::Kernels kernels_;
  Param patch_w_, patch_b_, cls_token_, pos_embed_;
  std::vector<Block> blocks_;
  Param norm_g_, norm_b_;
  Param head_w_, head_b_;
  bool classifier_frozen_ = false;
};

/// Backpropagates d(loss)/d(probs) through the softmax to d(loss)/d(logits).
Mat softmax_backward(const MatD& probs, const MatD& dprobs);

/// Top-1 predictions with ties broken toward the lowest class index.
std::vector<int> argmax_rows(const MatD& probs);

}  // namespace souf::backbone
