#include "rescap/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include <boost/crc.hpp>

#include "json.hpp"
#include "rescap/error.hpp"
#include "rescap/io_util.hpp"

namespace rescap::model {

using ad::Tensor;
using featurize::FeatureKind;

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

std::string block_prefix(std::size_t l) { return "block" + std::to_string(l) + "."; }

}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::Baseline1: return "baseline1";
    case Variant::Baseline2: return "baseline2";
    case Variant::Baseline3: return "baseline3";
    case Variant::Baseline4: return "baseline4";
    case Variant::Baseline5: return "baseline5";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (auto v : kAllVariants)
    if (name == variant_name(v)) return v;
  throw Error(ErrorCode::InvalidConfig, "unknown variant '" + name + "'");
}

ModelConfig ModelConfig::reference(Variant variant, std::size_t local_dim) {
  ModelConfig c;
  c.variant = variant;
  switch (variant) {
    case Variant::Baseline4:
      c.input_kind = FeatureKind::OneHot;
      c.input_channels = seqio::kAlphabetSize;
      c.input_length = featurize::kMaxLength;
      break;
    case Variant::Baseline5:
      c.input_kind = FeatureKind::LocalEmbed;
      c.input_channels = local_dim;
      c.input_length = featurize::kMaxLength;
      break;
    default:
      c.input_kind = FeatureKind::GlobalEmbed;
      c.input_channels = 1;
      c.input_length = featurize::kEmbeddingDim;
      break;
  }
  return c;
}

bool ModelConfig::has_encoder() const { return variant != Variant::Baseline1 && variant != Variant::Baseline3; }

bool ModelConfig::has_capsules() const { return variant != Variant::Baseline1 && variant != Variant::Baseline2; }

std::size_t ModelConfig::primary_capsule_count() const {
  ad::Conv1dOptions opts{1, primary_caps.stride, ad::Padding::Valid};
  return primary_caps.channels * ad::conv1d_output_length(input_length, primary_caps.kernel, opts);
}

void ModelConfig::validate() const {
  if (variant == Variant::Baseline4 && input_kind != FeatureKind::OneHot) invalid("baseline4 requires one-hot input");
  if (variant == Variant::Baseline5 && input_kind != FeatureKind::LocalEmbed)
    invalid("baseline5 requires local embedding input");
  if (input_kind == FeatureKind::OneHot && input_channels != seqio::kAlphabetSize)
    invalid("one-hot input has 20 channels");
  if (input_kind == FeatureKind::GlobalEmbed && input_channels != 1) invalid("global input is a 1-channel sequence");
  if (input_channels == 0 || input_length == 0) invalid("input geometry must be positive");
  if (residual_channels == 0 || skip_channels == 0) invalid("channel widths must be positive");
  if (kernel_size == 0) invalid("kernel_size must be >= 1");
  if (has_encoder()) {
    if (num_blocks == 0) invalid("encoder needs at least one block");
    if (dilations.size() != num_blocks) invalid("dilations length must equal num_blocks");
    for (auto d : dilations)
      if (d == 0) invalid("dilations must be >= 1");
  }
  if (variant == Variant::Baseline1 && baseline1_layers == 0) invalid("baseline1 needs at least one conv layer");
  if (has_capsules()) {
    if (routing_iters == 0) invalid("routing_iters must be >= 1");
    if (primary_caps.channels == 0 || primary_caps.dim == 0 || primary_caps.kernel == 0 || primary_caps.stride == 0)
      invalid("primary capsule geometry must be positive");
    if (out_caps.count == 0 || out_caps.dim == 0) invalid("output capsule geometry must be positive");
    if (primary_capsule_count() == 0) invalid("input length is shorter than the primary capsule kernel");
  }
}

std::string config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["variant"] = variant_name(c.variant);
  j["input_kind"] = featurize::feature_kind_name(c.input_kind);
  j["input_channels"] = c.input_channels;
  j["input_length"] = c.input_length;
  j["residual_channels"] = c.residual_channels;
  j["skip_channels"] = c.skip_channels;
  j["kernel_size"] = c.kernel_size;
  j["num_blocks"] = c.num_blocks;
  j["dilations"] = c.dilations;
  j["primary_caps"] = {{"channels", c.primary_caps.channels},
                       {"dim", c.primary_caps.dim},
                       {"kernel", c.primary_caps.kernel},
                       {"stride", c.primary_caps.stride}};
  j["out_caps"] = {{"count", c.out_caps.count}, {"dim", c.out_caps.dim}};
  j["routing_iters"] = c.routing_iters;
  j["baseline1_layers"] = c.baseline1_layers;
  j["seed"] = c.seed;
  return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    ModelConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.input_kind = featurize::parse_feature_kind(j.at("input_kind").get<std::string>());
    c.input_channels = j.at("input_channels").get<std::size_t>();
    c.input_length = j.at("input_length").get<std::size_t>();
    c.residual_channels = j.at("residual_channels").get<std::size_t>();
    c.skip_channels = j.at("skip_channels").get<std::size_t>();
    c.kernel_size = j.at("kernel_size").get<std::size_t>();
    c.num_blocks = j.at("num_blocks").get<std::size_t>();
    c.dilations = j.at("dilations").get<std::vector<std::size_t>>();
    const auto& pc = j.at("primary_caps");
    c.primary_caps = {pc.at("channels").get<std::size_t>(), pc.at("dim").get<std::size_t>(),
                      pc.at("kernel").get<std::size_t>(), pc.at("stride").get<std::size_t>()};
    const auto& oc = j.at("out_caps");
    c.out_caps = {oc.at("count").get<std::size_t>(), oc.at("dim").get<std::size_t>()};
    c.routing_iters = j.at("routing_iters").get<std::size_t>();
    c.baseline1_layers = j.at("baseline1_layers").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptCheckpoint, std::string("bad model config: ") + e.what());
  }
}

std::size_t encoder_receptive_field(const ModelConfig& config) {
  std::size_t total = 0;
  for (auto d : config.dilations) total += d;
  return 1 + (config.kernel_size - 1) * total;
}

// ---------------------------------------------------------------------------
// Parameters

Tensor& ModelParams::get(const std::string& name) {
  for (auto& t : tensors)
    if (t.name == name) return t.tensor;
  throw Error(ErrorCode::InvalidArgument, "no tensor named '" + name + "'");
}

const Tensor& ModelParams::get(const std::string& name) const { return const_cast<ModelParams*>(this)->get(name); }

bool ModelParams::contains(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(), [&](const auto& t) { return t.name == name; });
}

std::vector<Tensor> ModelParams::trainable() const {
  std::vector<Tensor> out;
  for (const auto& t : tensors)
    if (t.trainable) out.push_back(t.tensor);
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  out.config = config;
  for (const auto& t : tensors) {
    auto copy = t.tensor.detach();
    copy.set_requires_grad(t.trainable);
    out.tensors.push_back({t.name, t.layer, copy, t.trainable});
  }
  return out;
}

namespace {

class Builder {
 public:
  explicit Builder(ModelParams& params) : params_(params), rng_(params.config.seed) {}

  void uniform(const std::string& layer, const std::string& name, ad::Shape shape, double limit) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> v(ad::shape_size(shape));
    for (auto& x : v) x = dist(rng_);
    add(layer, name, std::move(shape), std::move(v), true);
  }

  void constant(const std::string& layer, const std::string& name, ad::Shape shape, double value, bool trainable) {
    std::vector<double> v(ad::shape_size(shape), value);
    add(layer, name, std::move(shape), std::move(v), trainable);
  }

  void conv(const std::string& layer, const std::string& name, std::size_t cout, std::size_t cin, std::size_t k) {
    uniform(layer, name + ".w", {cout, cin, k}, std::sqrt(6.0 / static_cast<double>(cin * k)));
    constant(layer, name + ".b", {cout}, 0.0, true);
  }

  void batch_norm(const std::string& layer, const std::string& name, std::size_t channels) {
    constant(layer, name + ".gamma", {channels}, 1.0, true);
    constant(layer, name + ".beta", {channels}, 0.0, true);
    constant(layer, name + ".mean", {channels}, 0.0, false);
    constant(layer, name + ".var", {channels}, 1.0, false);
  }

  void dense(const std::string& layer, const std::string& name, std::size_t out, std::size_t in) {
    uniform(layer, name + ".w", {out, in}, std::sqrt(6.0 / static_cast<double>(in)));
    constant(layer, name + ".b", {out}, 0.0, true);
  }

 private:
  void add(const std::string& layer, const std::string& name, ad::Shape shape, std::vector<double> v, bool trainable) {
    params_.tensors.push_back({name, layer, Tensor::from(std::move(shape), std::move(v), trainable), trainable});
  }

  ModelParams& params_;
  std::mt19937_64 rng_;
};

}  // namespace

ModelParams build(const ModelConfig& config) {
  config.validate();
  ModelParams params;
  params.config = config;
  Builder b(params);
  const auto& c = config;
  const std::size_t R = c.residual_channels, S = c.skip_channels;

  std::size_t head_in = 0;
  if (c.variant == Variant::Baseline1) {
    std::size_t cin = c.input_channels;
    for (std::size_t l = 0; l < c.baseline1_layers; ++l) {
      auto name = "conv" + std::to_string(l);
      b.conv(name, name, R, cin, c.kernel_size);
      cin = R;
    }
    head_in = R;
  }
  if (c.has_encoder()) {
    b.conv("stem", "stem", R, c.input_channels, 1);
    for (std::size_t l = 0; l < c.num_blocks; ++l) {
      auto layer = "block" + std::to_string(l);
      auto p = block_prefix(l);
      b.conv(layer, p + "dilated", R, R, c.kernel_size);
      b.batch_norm(layer, p + "bn1", R);
      b.conv(layer, p + "pointwise", R, R, 1);
      b.batch_norm(layer, p + "bn2", R);
      b.conv(layer, p + "skip", S, R, 1);
    }
    head_in = S;
  }
  if (c.has_capsules()) {
    const std::size_t caps_in = c.has_encoder() ? S : c.input_channels;
    b.conv("primary_caps", "caps.primary", c.primary_caps.channels * c.primary_caps.dim, caps_in, c.primary_caps.kernel);
    b.uniform("routing_caps", "caps.W",
              {c.primary_capsule_count(), c.out_caps.count, c.out_caps.dim, c.primary_caps.dim}, 0.1);
    head_in = c.out_caps.count * c.out_caps.dim;
  }
  b.dense("head", "head", 1, head_in);
  return params;
}

std::size_t count_parameters(const ModelParams& params) {
  std::size_t n = 0;
  for (const auto& t : params.tensors)
    if (t.trainable) n += t.tensor.size();
  return n;
}

std::vector<std::pair<std::string, std::size_t>> layer_parameter_counts(const ModelParams& params) {
  std::vector<std::pair<std::string, std::size_t>> rows;
  for (const auto& t : params.tensors) {
    if (!t.trainable) continue;
    if (rows.empty() || rows.back().first != t.layer) rows.emplace_back(t.layer, 0);
    rows.back().second += t.tensor.size();
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Inputs

Tensor reshape_input(const featurize::FeatureMatrix& feat) {
  // Row-major rows x cols becomes channels-first (1, cols, rows); a global vector is (1, 1, dim).
  if (feat.kind == FeatureKind::GlobalEmbed) return Tensor::from({1, 1, feat.cols}, feat.data);
  std::vector<double> v(feat.rows * feat.cols);
  for (std::size_t r = 0; r < feat.rows; ++r)
    for (std::size_t c = 0; c < feat.cols; ++c) v[c * feat.rows + r] = feat.data[r * feat.cols + c];
  return Tensor::from({1, feat.cols, feat.rows}, std::move(v));
}

Tensor assemble_batch(const ModelConfig& config, const std::vector<const featurize::FeatureMatrix*>& batch) {
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "empty batch");
  const std::size_t C = config.input_channels, L = config.input_length;
  std::vector<double> v(batch.size() * C * L, 0.0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& f = *batch[b];
    if (f.kind != config.input_kind)
      throw Error(ErrorCode::KindMismatch, "sample '" + f.source_id + "' is " + featurize::feature_kind_name(f.kind) +
                                               ", model expects " + featurize::feature_kind_name(config.input_kind));
    double* dst = &v[b * C * L];
    if (f.kind == FeatureKind::GlobalEmbed) {
      if (f.cols != L) throw Error(ErrorCode::ShapeMismatch, "global embedding dim does not match model input length");
      std::copy(f.data.begin(), f.data.end(), dst);
      continue;
    }
    if (f.cols != C) throw Error(ErrorCode::ShapeMismatch, "feature width does not match model input channels");
    const std::size_t rows = std::min(f.rows, L);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < C; ++c) dst[c * L + r] = f.data[r * C + c];
  }
  return Tensor::from({batch.size(), C, L}, std::move(v));
}

// ---------------------------------------------------------------------------
// Encoder

ResidualBlockParams block_params(ModelParams& params, std::size_t block) {
  auto p = block_prefix(block);
  auto g = [&](const char* suffix) { return params.get(p + suffix); };
  return {g("dilated.w"),   g("dilated.b"),   g("bn1.gamma"), g("bn1.beta"), g("bn1.mean"),
          g("bn1.var"),     g("pointwise.w"), g("pointwise.b"), g("bn2.gamma"), g("bn2.beta"),
          g("bn2.mean"),    g("bn2.var"),     g("skip.w"),    g("skip.b")};
}

ResidualOutput residual_block(const Tensor& x, ResidualBlockParams& p, std::size_t dilation, std::size_t kernel_size,
                              ad::Mode mode) {
  if (x.rank() != 3 || x.dim(1) != p.dilated_w.dim(1))
    throw Error(ErrorCode::ShapeMismatch, "residual block input " + ad::shape_string(x.shape()) +
                                              " does not match " + std::to_string(p.dilated_w.dim(1)) + " channels");
  if (p.dilated_w.dim(2) != kernel_size) throw Error(ErrorCode::ShapeMismatch, "kernel size mismatch");
  ad::Conv1dOptions dil{dilation, 1, ad::Padding::Causal};
  ad::Conv1dOptions point{1, 1, ad::Padding::Causal};
  auto h = ad::conv1d(x, p.dilated_w, p.dilated_b, dil);
  h = ad::batch_norm1d(h, p.bn1_gamma, p.bn1_beta, p.bn1_mean, p.bn1_var, mode);
  h = ad::relu(h);
  auto skip = ad::conv1d(h, p.skip_w, p.skip_b, point);
  auto f = ad::conv1d(h, p.pointwise_w, p.pointwise_b, point);
  f = ad::batch_norm1d(f, p.bn2_gamma, p.bn2_beta, p.bn2_mean, p.bn2_var, mode);
  return {ad::add(x, f), skip};
}

EncoderOutput residual_stack(const Tensor& x, ModelParams& params, ad::Mode mode) {
  const auto& c = params.config;
  EncoderOutput out{x, {}};
  for (std::size_t l = 0; l < c.num_blocks; ++l) {
    auto bp = block_params(params, l);
    auto r = residual_block(out.residual, bp, c.dilations[l], c.kernel_size, mode);
    out.residual = r.residual;
    out.skip_sum = out.skip_sum.defined() ? ad::add(out.skip_sum, r.skip) : r.skip;
  }
  return out;
}

Tensor encoder_features(ModelParams& params, const Tensor& input, ad::Mode mode) {
  auto stem = ad::conv1d(input, params.get("stem.w"), params.get("stem.b"), {1, 1, ad::Padding::Causal});
  return ad::relu(residual_stack(stem, params, mode).skip_sum);
}

// ---------------------------------------------------------------------------
// Capsules

Tensor dynamic_routing(const Tensor& u_hat, std::size_t iterations, RoutingTrace* trace) {
  if (iterations == 0) throw Error(ErrorCode::InvalidConfig, "routing needs at least one iteration");
  if (u_hat.rank() != 4) throw Error(ErrorCode::ShapeMismatch, "u_hat must be [B, N, J, d]");
  const std::size_t B = u_hat.dim(0), N = u_hat.dim(1), J = u_hat.dim(2);
  auto logits = Tensor::zeros({B, N, J});
  Tensor v;
  for (std::size_t it = 0; it < iterations; ++it) {
    auto c = ad::softmax(logits, 2);
    v = ad::squash(ad::routing_combine(c, u_hat));
    if (trace) {
      trace->coupling.push_back(c);
      trace->outputs.push_back(v);
    }
    if (it + 1 < iterations) logits = ad::add(logits, ad::routing_agreement(u_hat, v));
  }
  return v;
}

Tensor capsule_layer(const Tensor& features, ModelParams& params, std::size_t routing_iters, RoutingTrace* trace) {
  const auto& pc = params.config.primary_caps;
  auto conv = ad::conv1d(features, params.get("caps.primary.w"), params.get("caps.primary.b"),
                         {1, pc.stride, ad::Padding::Valid});
  const std::size_t B = conv.dim(0), P = conv.dim(2), K = pc.channels, d = pc.dim;
  const std::size_t N = K * P;
  const auto& W = params.get("caps.W");
  if (W.dim(0) != N)
    throw Error(ErrorCode::ShapeMismatch, "input produces " + std::to_string(N) + " primary capsules, weights expect " +
                                              std::to_string(W.dim(0)));
  // u[b, k*P + p, m] = conv[b, k*d + m, p]
  std::vector<std::size_t> index(B * N * d);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t p = 0; p < P; ++p)
        for (std::size_t m = 0; m < d; ++m)
          index[(b * N + k * P + p) * d + m] = (b * K * d + k * d + m) * P + p;
  auto u = ad::squash(ad::gather(conv, {B, N, d}, std::move(index)));
  auto u_hat = ad::capsule_predict(u, W);
  return dynamic_routing(u_hat, routing_iters, trace);
}

// ---------------------------------------------------------------------------
// Forward

Tensor forward(ModelParams& params, const Tensor& input, ad::Mode mode) {
  const auto& c = params.config;
  if (input.rank() != 3 || input.dim(1) != c.input_channels || input.dim(2) != c.input_length)
    throw Error(ErrorCode::ShapeMismatch, "input " + ad::shape_string(input.shape()) + " does not match model input [B, " +
                                              std::to_string(c.input_channels) + ", " + std::to_string(c.input_length) +
                                              "]");
  const std::size_t B = input.dim(0);
  Tensor pooled;
  switch (c.variant) {
    case Variant::Baseline1: {
      Tensor h = input;
      for (std::size_t l = 0; l < c.baseline1_layers; ++l) {
        auto name = "conv" + std::to_string(l);
        h = ad::relu(ad::conv1d(h, params.get(name + ".w"), params.get(name + ".b"), {1, 1, ad::Padding::Causal}));
      }
      pooled = ad::global_avg_pool(h);
      break;
    }
    case Variant::Baseline2:
      pooled = ad::global_avg_pool(encoder_features(params, input, mode));
      break;
    case Variant::Baseline3: {
      auto v = capsule_layer(input, params, c.routing_iters);
      pooled = ad::reshape(v, {B, c.out_caps.count * c.out_caps.dim});
      break;
    }
    case Variant::Full:
    case Variant::Baseline4:
    case Variant::Baseline5: {
      auto v = capsule_layer(encoder_features(params, input, mode), params, c.routing_iters);
      pooled = ad::reshape(v, {B, c.out_caps.count * c.out_caps.dim});
      break;
    }
  }
  return ad::sigmoid(ad::dense(pooled, params.get("head.w"), params.get("head.b")));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kCheckpointMagic[4] = {'R', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

std::uint32_t crc32(std::string_view bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

class CheckpointReader {
 public:
  CheckpointReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::CorruptCheckpoint, "truncated checkpoint");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ModelParams& params) {
  std::string out(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  auto cfg = config_to_json(params.config);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& t : params.tensors) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.layer.size()));
    out += t.layer;
    put<std::uint8_t>(out, t.trainable ? 1 : 0);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.tensor.rank()));
    for (auto d : t.tensor.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : t.tensor.values()) put<double>(out, v);
  }
  put<std::uint32_t>(out, crc32(out));
  return out;
}

ModelParams decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw Error(ErrorCode::CorruptCheckpoint, "not a checkpoint file");
  std::string_view body(bytes.data(), bytes.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 4);

  CheckpointReader in(body);
  in.get_string(4);
  auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  if (crc32(body) != stored) throw Error(ErrorCode::CorruptCheckpoint, "checksum mismatch");

  auto cfg_len = in.get<std::uint32_t>();
  auto params = build(config_from_json(in.get_string(cfg_len)));
  auto count = in.get<std::uint32_t>();
  if (count != params.tensors.size()) throw Error(ErrorCode::CorruptCheckpoint, "tensor count does not match config");
  for (std::uint32_t k = 0; k < count; ++k) {
    auto name = in.get_string(in.get<std::uint16_t>());
    auto layer = in.get_string(in.get<std::uint16_t>());
    bool trainable = in.get<std::uint8_t>() != 0;
    auto rank = in.get<std::uint8_t>();
    ad::Shape shape(rank);
    for (auto& d : shape) d = in.get<std::uint32_t>();
    auto& slot = params.tensors.at(k);
    if (slot.name != name || slot.layer != layer || slot.trainable != trainable || slot.tensor.shape() != shape)
      throw Error(ErrorCode::CorruptCheckpoint, "tensor '" + name + "' does not match the model layout");
    for (double& v : slot.tensor.mutable_values()) {
      v = in.get<double>();
      if (!std::isfinite(v)) throw Error(ErrorCode::CorruptCheckpoint, "non-finite value in '" + name + "'");
    }
  }
  if (!in.done()) throw Error(ErrorCode::CorruptCheckpoint, "trailing bytes");
  return params;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace rescap::model
