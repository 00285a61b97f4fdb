#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rescap/autodiff.hpp"
#include "rescap/featurize.hpp"

namespace rescap::model {

enum class Variant { Full, Baseline1, Baseline2, Baseline3, Baseline4, Baseline5 };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);  // full | baseline1 .. baseline5
inline constexpr Variant kAllVariants[] = {Variant::Baseline1, Variant::Baseline2, Variant::Baseline3,
                                           Variant::Baseline4, Variant::Baseline5, Variant::Full};

struct PrimaryCapsConfig {
  std::size_t channels = 32;  // capsule channels
  std::size_t dim = 8;
  std::size_t kernel = 9;
  std::size_t stride = 8;
  bool operator==(const PrimaryCapsConfig&) const = default;
};

struct OutputCapsConfig {
  std::size_t count = 2;
  std::size_t dim = 16;
  bool operator==(const OutputCapsConfig&) const = default;
};

struct ModelConfig {
  Variant variant = Variant::Full;
  featurize::FeatureKind input_kind = featurize::FeatureKind::GlobalEmbed;
  /// Model input geometry [C, L]; the capsule transforms are sized for this length.
  std::size_t input_channels = 1;
  std::size_t input_length = featurize::kEmbeddingDim;
  std::size_t residual_channels = 32;
  std::size_t skip_channels = 32;
  std::size_t kernel_size = 3;
  std::size_t num_blocks = 6;
  std::vector<std::size_t> dilations = {1, 2, 4, 8, 16, 32};
  PrimaryCapsConfig primary_caps;
  OutputCapsConfig out_caps;
  std::size_t routing_iters = 2;
  std::size_t baseline1_layers = 3;
  std::uint64_t seed = 0;

  /// Reference configuration of a variant, with the input kind the variant prescribes.
  static ModelConfig reference(Variant variant, std::size_t local_dim = featurize::kEmbeddingDim);

  bool has_encoder() const;
  bool has_capsules() const;
  /// Number of primary (input) capsules for the configured input length.
  std::size_t primary_capsule_count() const;
  /// Throws InvalidConfig.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);

/// Receptive field of the residual encoder: 1 + (k - 1) * sum(dilations).
std::size_t encoder_receptive_field(const ModelConfig& config);

struct NamedTensor {
  std::string name;
  std::string layer;
  ad::Tensor tensor;
  bool trainable = true;
};

/// All tensors of one model instance: trainable parameters and batch-norm running statistics.
struct ModelParams {
  ModelConfig config;
  std::vector<NamedTensor> tensors;

  ad::Tensor& get(const std::string& name);
  const ad::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<ad::Tensor> trainable() const;
  /// Deep copy (fresh nodes).
  ModelParams clone() const;
};

ModelParams build(const ModelConfig& config);

std::size_t count_parameters(const ModelParams& params);
/// Trainable element counts grouped by layer, in construction order.
std::vector<std::pair<std::string, std::size_t>> layer_parameter_counts(const ModelParams& params);

/// Single sample as a [1, C, L] tensor: one-hot -> (1, 20, L_max), local -> (1, dim, L),
/// global -> (1, 1, dim).
ad::Tensor reshape_input(const featurize::FeatureMatrix& feat);

/// Stacks samples into [B, C, L] with the model's input geometry; local embeddings are
/// zero-padded (or truncated) to config.input_length.
ad::Tensor assemble_batch(const ModelConfig& config, const std::vector<const featurize::FeatureMatrix*>& batch);

struct ResidualBlockParams {
  ad::Tensor dilated_w, dilated_b, bn1_gamma, bn1_beta, bn1_mean, bn1_var;
  ad::Tensor pointwise_w, pointwise_b, bn2_gamma, bn2_beta, bn2_mean, bn2_var;
  ad::Tensor skip_w, skip_b;
};

ResidualBlockParams block_params(ModelParams& params, std::size_t block);

struct ResidualOutput {
  ad::Tensor residual;
  ad::Tensor skip;
};

/// F = causal dilated conv -> BN -> relu -> 1x1 conv -> BN; residual = x + F(x);
/// skip = 1x1 conv of the post-relu activation.
ResidualOutput residual_block(const ad::Tensor& x, ResidualBlockParams& p, std::size_t dilation,
                              std::size_t kernel_size, ad::Mode mode);

struct EncoderOutput {
  ad::Tensor residual;  // output of the last block
  ad::Tensor skip_sum;  // sum of all skip outputs
};

/// Residual blocks only; x is the stem output [B, residual_channels, L].
EncoderOutput residual_stack(const ad::Tensor& x, ModelParams& params, ad::Mode mode);

/// Coupling coefficients and outputs of every routing iteration.
struct RoutingTrace {
  std::vector<ad::Tensor> coupling;  // [B, N, J] per iteration
  std::vector<ad::Tensor> outputs;   // [B, J, d] per iteration
};

/// Dynamic routing by agreement over predictions u_hat [B, N, J, d]; returns v [B, J, d].
ad::Tensor dynamic_routing(const ad::Tensor& u_hat, std::size_t iterations, RoutingTrace* trace = nullptr);

/// Primary capsules (strided conv, squashed) -> predictions -> routing. features [B, C, L].
ad::Tensor capsule_layer(const ad::Tensor& features, ModelParams& params, std::size_t routing_iters,
                         RoutingTrace* trace = nullptr);

/// Probability of the positive class, [B, 1].
ad::Tensor forward(ModelParams& params, const ad::Tensor& input, ad::Mode mode);

/// Output of the encoder path that feeds the capsules (relu of the skip sum), [B, S, L].
ad::Tensor encoder_features(ModelParams& params, const ad::Tensor& input, ad::Mode mode);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(const std::string& bytes);

}  // namespace rescap::model
