#include "beamkit/neural/model.hpp"

#include <algorithm>
#include <cmath>

#include "beamkit/error.hpp"
#include "beamkit/neural/ops.hpp"
#include "beamkit/neural/spectral_ops.hpp"

namespace beamkit::nn {

const char* to_string(MaskKind kind) { return kind == MaskKind::kIrm ? "irm" : "crm"; }

MaskKind parse_mask_kind(const std::string& text) {
  if (text == "irm" || text == "IRM") return MaskKind::kIrm;
  if (text == "crm" || text == "cRM" || text == "CRM") return MaskKind::kCrm;
  throw InvalidArgument("mask kind must be 'irm' or 'crm', got '" + text + "'");
}

PreSeparatorConfig PreSeparatorConfig::toy() { return {}; }

PreSeparatorConfig PreSeparatorConfig::paper_scale() {
  PreSeparatorConfig c;
  c.unet_channels = {5, 32, 64, 128};
  c.tcn_repeats = 3;
  c.tcn_stack = 8;
  c.tcn_channels = 128;
  return c;
}

void PreSeparatorConfig::validate() const {
  std::vector<std::string> problems;
  if (unet_channels.size() < 2) problems.push_back("unet_channels needs at least two entries");
  for (int c : unet_channels) {
    if (c < 1) problems.push_back("unet_channels entries must be positive");
  }
  if (tcn_repeats < 0 || tcn_stack < 1) problems.push_back("tcn_repeats >= 0 and tcn_stack >= 1");
  if (tcn_channels < 1) problems.push_back("tcn_channels must be positive");
  if (tcn_kernel < 1 || tcn_kernel % 2 == 0) problems.push_back("tcn_kernel must be odd");
  if (unet_channels.size() >= 2 && (bins < 2 || (bins - 1) % stride_product() != 0)) {
    problems.push_back("bins - 1 = " + std::to_string(bins - 1) +
                       " is not divisible by the encoder stride product " +
                       std::to_string(stride_product()));
  }
  if (!problems.empty()) {
    std::string msg = "invalid pre-separator config:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw InvalidArgument(msg);
  }
}

BeamformerNetConfig BeamformerNetConfig::toy() { return {}; }

BeamformerNetConfig BeamformerNetConfig::paper_scale() {
  BeamformerNetConfig c;
  c.gru_hidden = 256;
  c.attention_dim = 128;
  c.attention_heads = 4;
  return c;
}

void BeamformerNetConfig::validate() const {
  std::vector<std::string> problems;
  if (mics < 2) problems.push_back("mics must be >= 2");
  if (pairs < 1) problems.push_back("pairs must be >= 1");
  if (gru_layers < 1) problems.push_back("gru_layers must be >= 1");
  if (gru_hidden < 1) problems.push_back("gru_hidden must be positive");
  if (attention_heads < 1 || attention_dim < 1 || attention_dim % attention_heads != 0) {
    problems.push_back("attention_dim must be a positive multiple of attention_heads");
  }
  if (reference_mic < 0 || reference_mic >= mics) problems.push_back("reference_mic out of range");
  if (!problems.empty()) {
    std::string msg = "invalid beamformer config:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw InvalidArgument(msg);
  }
}

void ExtractorConfig::validate() const {
  pre.validate();
  net.validate();
  if (pre.unet_channels.front() != net.pairs + 2) {
    throw InvalidArgument("unet_channels[0] = " + std::to_string(pre.unet_channels.front()) +
                          " but the feature stack has " + std::to_string(net.pairs + 2) +
                          " planes (magnitude, " + std::to_string(net.pairs) + " cosIPD, AF)");
  }
}

PreSeparator::PreSeparator(const PreSeparatorConfig& cfg, ParamStore& store,
                           const std::string& prefix)
    : cfg_(cfg) {
  cfg_.validate();
  const auto& ch = cfg_.unet_channels;
  const int L = cfg_.levels();
  for (int l = 1; l <= L; ++l) {
    const std::string n = prefix + ".enc" + std::to_string(l);
    encoders_.emplace_back(store, n, ch[l - 1], ch[l], 3, 3, 2, 1, 1);
    encoder_acts_.emplace_back(store, n + ".act");
  }
  const int width = ch[L] * cfg_.bottleneck_bins();
  bottleneck_in_ = Conv1d(store, prefix + ".bottleneck.in", width, cfg_.tcn_channels, 1, 1, 0);
  const int c = cfg_.tcn_channels;
  const int k = cfg_.tcn_kernel;
  for (int r = 0; r < cfg_.tcn_repeats; ++r) {
    for (int b = 0; b < cfg_.tcn_stack; ++b) {
      const std::string n = prefix + ".tcn.r" + std::to_string(r) + ".b" + std::to_string(b);
      const int d = 1 << b;
      tcn_.push_back({Conv1d(store, n + ".in", c, c, 1, 1, 0),
                      Conv1d(store, n + ".dconv", c, c, k, d, d * (k - 1) / 2),
                      Conv1d(store, n + ".out", c, c, 1, 1, 0), PRelu(store, n + ".act1"),
                      PRelu(store, n + ".act2"), LayerNorm(store, n + ".norm1", c),
                      LayerNorm(store, n + ".norm2", c)});
    }
  }
  for (int l = L; l >= 1; --l) {
    const std::string n = prefix + ".dec" + std::to_string(l);
    const int out = l >= 2 ? ch[l - 1] : ch[1];
    decoders_.emplace_back(store, n, 2 * ch[l], out, 3, 3, 2, 1, 1);
    decoder_acts_.emplace_back(store, n + ".act");
  }
  const int planes = cfg_.mask_kind == MaskKind::kCrm ? 4 : 2;
  head_ = Conv2d(store, prefix + ".head", ch[1], planes, 1, 1, 1, 0, 0);
  bottleneck_out_ = Conv1d(store, prefix + ".bottleneck.out", cfg_.tcn_channels, width, 1, 1, 0);
}

MaskPair PreSeparator::operator()(const Tensor& features) const {
  if (features.rank() != 3) {
    throw InvalidArgument("pre-separator expects [N, F, T], got " + shape_string(features.shape()));
  }
  if (features.dim(0) != cfg_.unet_channels.front()) {
    throw InvalidArgument("pre-separator expects " + std::to_string(cfg_.unet_channels.front()) +
                          " feature planes, got " + std::to_string(features.dim(0)));
  }
  if (features.dim(1) != cfg_.bins) {
    throw InvalidArgument("pre-separator built for F = " + std::to_string(cfg_.bins) +
                          ", got F = " + std::to_string(features.dim(1)));
  }
  const int T = features.dim(2);
  const int L = cfg_.levels();

  Tensor x = features;
  std::vector<Tensor> skips;
  for (int l = 0; l < L; ++l) {
    x = encoder_acts_[l](encoders_[l](x));
    skips.push_back(x);
  }

  const int C = x.dim(0), Fb = x.dim(1);
  Tensor y = bottleneck_in_(reshape(x, {C * Fb, T}));
  for (const auto& b : tcn_) {
    Tensor h = b.norm1.channels(b.act1(b.in(y)));
    h = b.norm2.channels(b.act2(b.dilated(h)));
    y = add(y, b.out(h));
  }
  x = reshape(bottleneck_out_(y), {C, Fb, T});

  for (int i = 0; i < L; ++i) {
    x = concat({x, skips[static_cast<std::size_t>(L - 1 - i)]}, 0);
    x = decoder_acts_[i](decoders_[i](x));
  }

  const Tensor head = head_(x);
  const int F = cfg_.bins;
  if (cfg_.mask_kind == MaskKind::kCrm) {
    return {slice(head, 0, 0, 2), slice(head, 0, 2, 2)};
  }
  const Tensor m = sigmoid(head);
  return {reshape(slice(m, 0, 0, 1), {F, T}), reshape(slice(m, 0, 1, 1), {F, T})};
}

BeamformerNet::BeamformerNet(const BeamformerNetConfig& cfg, ParamStore& store,
                             const std::string& prefix)
    : cfg_(cfg) {
  cfg_.validate();
  const int D = cfg_.covariance_features();
  const int H = cfg_.gru_hidden;
  const int K = cfg_.attention_dim;
  cov_norm_ = LayerNorm(store, prefix + ".cov.norm", D);
  cov_in_ = Linear(store, prefix + ".cov.in", D, H);
  cov_gru_ = Gru(store, prefix + ".cov.gru", H, H, cfg_.gru_layers);
  cov_out_ = Linear(store, prefix + ".cov.out", H, K);
  spatial_in_ = Linear(store, prefix + ".spatial.in", cfg_.pairs + 1, H);
  spatial_gru_ = Gru(store, prefix + ".spatial.gru", H, H, cfg_.gru_layers);
  spatial_out_ = Linear(store, prefix + ".spatial.out", H, K);
  attention_ = MultiHeadAttention(store, prefix + ".mhca", K, cfg_.attention_heads);
  head_ = Linear(store, prefix + ".head", K, cfg_.output_dim());

  // Start near the reference-microphone passthrough w = e_ref: small output
  // weights and a bias selecting the reference channel.
  const std::string wname = prefix + ".head.weight";
  for (double& v : head_.weight.mutable_values()) v *= 0.1;
  store.set_init(wname, {ParamInit::Kind::kUniformFanIn, 0.1 / std::sqrt(static_cast<double>(K)),
                         "scaled by 0.1"});
  auto bias = head_.bias.mutable_values();
  std::fill(bias.begin(), bias.end(), 0.0);
  bias[static_cast<std::size_t>(cfg_.reference_mic)] = 1.0;
  store.set_init(prefix + ".head.bias",
                 {ParamInit::Kind::kCustom, 0.0,
                  "unit real weight on mic " + std::to_string(cfg_.reference_mic)});
}

Tensor BeamformerNet::operator()(const Tensor& phi_ss, const Tensor& phi_nn,
                                 const Tensor& cos_ipd, const Tensor& af) const {
  const int M = cfg_.mics;
  if (phi_ss.rank() != 5 || phi_ss.dim(2) != 2 || phi_ss.dim(3) != M || phi_ss.dim(4) != M) {
    throw InvalidArgument("beamformer: phi_ss must be [T, F, 2, " + std::to_string(M) + ", " +
                          std::to_string(M) + "], got " + shape_string(phi_ss.shape()));
  }
  if (phi_nn.shape() != phi_ss.shape()) {
    throw InvalidArgument("beamformer: phi_nn " + shape_string(phi_nn.shape()) +
                          " does not match phi_ss " + shape_string(phi_ss.shape()));
  }
  const int T = phi_ss.dim(0), F = phi_ss.dim(1);
  if (cos_ipd.rank() != 3 || cos_ipd.dim(0) != cfg_.pairs || cos_ipd.dim(1) != F) {
    throw InvalidArgument("beamformer: cos_ipd must be [" + std::to_string(cfg_.pairs) + ", " +
                          std::to_string(F) + ", T], got " + shape_string(cos_ipd.shape()));
  }
  if (af.rank() != 2 || af.dim(0) != F) {
    throw InvalidArgument("beamformer: af must be [" + std::to_string(F) + ", T], got " +
                          shape_string(af.shape()));
  }
  if (cos_ipd.dim(2) != T || af.dim(1) != T) {
    throw InvalidArgument("beamformer: frame count mismatch between covariance stream (T = " +
                          std::to_string(T) + ") and spatial stream (T = " +
                          std::to_string(cos_ipd.dim(2)) + "/" + std::to_string(af.dim(1)) + ")");
  }

  // Tokens are (frame, frequency); GRUs run along frequency with frames as
  // the batch, so frames never exchange information.
  auto encode = [](const Tensor& tokens, const Linear& in, const Gru& gru, const Linear& out) {
    const Tensor h = permute(in(tokens), {1, 0, 2});  // [F, T, H]
    return out(permute(gru(h), {1, 0, 2}));          // [T, F, K]
  };
  const Tensor cov = cov_norm_(
      reshape(concat({phi_ss, phi_nn}, 2), {T, F, cfg_.covariance_features()}));
  const Tensor spatial = permute(concat({cos_ipd, reshape(af, {1, F, T})}, 0), {2, 1, 0});

  const Tensor kv = encode(cov, cov_in_, cov_gru_, cov_out_);
  const Tensor q = encode(spatial, spatial_in_, spatial_gru_, spatial_out_);
  return head_(attention_(q, kv));
}

Tensor features_tensor(const FeatureStack& stack) {
  const int N = stack.num_planes(), F = stack.bins(), T = stack.frames();
  std::vector<double> v(static_cast<std::size_t>(N) * F * T);
  std::size_t i = 0;
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f)
      for (int t = 0; t < T; ++t) v[i++] = stack.planes[n](f, t);
  return Tensor::constant({N, F, T}, std::move(v));
}

Tensor as_complex_mask(const Tensor& mask, MaskKind kind) {
  if (kind == MaskKind::kCrm) {
    if (mask.rank() != 3 || mask.dim(0) != 2) {
      throw InvalidArgument("cRM must be [2, F, T], got " + shape_string(mask.shape()));
    }
    return mask;
  }
  if (mask.rank() != 2) throw InvalidArgument("IRM must be [F, T], got " + shape_string(mask.shape()));
  const int F = mask.dim(0), T = mask.dim(1);
  return concat({reshape(mask, {1, F, T}), Tensor::zeros({1, F, T})}, 0);
}

BeamWeights to_beam_weights(const Tensor& weights, int mics) {
  if (weights.rank() != 3 || weights.dim(2) != 2 * mics) {
    throw InvalidArgument("weights must be [T, F, " + std::to_string(2 * mics) + "], got " +
                          shape_string(weights.shape()));
  }
  const int T = weights.dim(0), F = weights.dim(1);
  BeamWeights out(T, F, mics);
  const auto v = weights.values();
  for (int t = 0; t < T; ++t)
    for (int f = 0; f < F; ++f) {
      const double* w = v.data() + (static_cast<std::size_t>(t) * F + f) * 2 * mics;
      auto& dst = out.at(t, f);
      for (int m = 0; m < mics; ++m) dst(m) = Complex(w[m], w[mics + m]);
    }
  return out;
}

NeuralExtractor::NeuralExtractor(const ExtractorConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), params_(seed) {
  cfg_.validate();
  pre_ = PreSeparator(cfg_.pre, params_, "pre");
  net_ = BeamformerNet(cfg_.net, params_, "bf");
}

ExtractorOutput NeuralExtractor::forward(const Spectrogram& mixture, const FeatureStack& features,
                                         std::size_t length) const {
  if (mixture.channels() != cfg_.net.mics) {
    throw InvalidArgument("model expects " + std::to_string(cfg_.net.mics) + " channels, got " +
                          std::to_string(mixture.channels()));
  }
  if (features.num_planes() != cfg_.net.pairs + 2 || features.bins() != mixture.bins() ||
      features.frames() != mixture.frames()) {
    throw InvalidArgument("feature stack does not match the mixture spectrogram");
  }
  const Tensor feats = features_tensor(features);
  ExtractorOutput out;
  out.masks = pre_(feats);
  const Tensor speech = complex_mask_apply(as_complex_mask(out.masks.speech, cfg_.pre.mask_kind), mixture);
  const Tensor noise = complex_mask_apply(as_complex_mask(out.masks.noise, cfg_.pre.mask_kind), mixture);
  const int P = cfg_.net.pairs;
  const int F = features.bins(), T = features.frames();
  out.weights = net_(outer_product_features(speech), outer_product_features(noise),
                     slice(feats, 0, 1, P), reshape(slice(feats, 0, 1 + P, 1), {F, T}));
  out.spectrum = beamform_apply(out.weights, mixture);
  out.waveform = istft_tensor(out.spectrum, mixture.config(), length);
  return out;
}

}  // namespace beamkit::nn
