#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "beamkit/beamform.hpp"
#include "beamkit/features.hpp"
#include "beamkit/neural/layers.hpp"
#include "beamkit/neural/tensor.hpp"
#include "beamkit/signal_io.hpp"

namespace beamkit::nn {

enum class MaskKind { kIrm, kCrm };

const char* to_string(MaskKind kind);
MaskKind parse_mask_kind(const std::string& text);

struct PreSeparatorConfig {
  std::vector<int> unet_channels{5, 8, 16, 32};  // first entry = feature planes
  int bins = 257;  // frequency bins F; fixes the bottleneck width
  int tcn_repeats = 2;
  int tcn_stack = 3;  // blocks per repeat, dilations 1, 2, 4, ...
  int tcn_channels = 32;
  int tcn_kernel = 3;
  MaskKind mask_kind = MaskKind::kCrm;

  static PreSeparatorConfig toy();
  static PreSeparatorConfig paper_scale();

  int levels() const { return static_cast<int>(unet_channels.size()) - 1; }
  /// (bins - 1) must be divisible by this.
  int stride_product() const { return 1 << levels(); }
  /// Frequency size after the encoder.
  int bottleneck_bins() const { return (bins - 1) / stride_product() + 1; }
  void validate() const;
};

struct BeamformerNetConfig {
  int mics = 4;
  int pairs = 3;
  int gru_layers = 2;
  int gru_hidden = 32;
  int attention_dim = 16;
  int attention_heads = 2;
  int reference_mic = 0;

  static BeamformerNetConfig toy();
  static BeamformerNetConfig paper_scale();

  int output_dim() const { return 2 * mics; }
  int covariance_features() const { return 4 * mics * mics; }
  void validate() const;
};

/// IRM masks are [F, T]; cRM masks are [2, F, T] (real plane first).
struct MaskPair {
  Tensor speech;
  Tensor noise;
};

/// UNet encoder over frequency, TCN bottleneck over time, decoder with skip
/// connections and a 1x1 mask head.
class PreSeparator {
 public:
  PreSeparator() = default;
  PreSeparator(const PreSeparatorConfig& cfg, ParamStore& store, const std::string& prefix = "pre");

  /// features [N, F, T].
  MaskPair operator()(const Tensor& features) const;
  const PreSeparatorConfig& config() const { return cfg_; }

 private:
  struct TcnBlock {
    Conv1d in, dilated, out;
    PRelu act1, act2;
    LayerNorm norm1, norm2;
  };
  PreSeparatorConfig cfg_;
  std::vector<Conv2d> encoders_;
  std::vector<PRelu> encoder_acts_;
  Conv1d bottleneck_in_, bottleneck_out_;
  std::vector<TcnBlock> tcn_;
  std::vector<ConvTranspose2d> decoders_;
  std::vector<PRelu> decoder_acts_;
  Conv2d head_;
};

/// Cross-attention beamformer. Per frame, each frequency is a token: the
/// covariance stream carries re/im of Phi_SS and Phi_NN flattened as
/// (stream, re/im, row, column), the spatial stream carries the cosIPD planes
/// and the angle feature. Each stream goes through linear -> GRU over
/// frequency -> linear; spatial embeddings query the covariance embeddings
/// within the frame.
class BeamformerNet {
 public:
  BeamformerNet() = default;
  BeamformerNet(const BeamformerNetConfig& cfg, ParamStore& store, const std::string& prefix = "bf");

  /// phi_ss, phi_nn [T, F, 2, M, M]; cos_ipd [P, F, T]; af [F, T]. Returns
  /// [T, F, 2M] weights, real parts then imaginary parts.
  Tensor operator()(const Tensor& phi_ss, const Tensor& phi_nn, const Tensor& cos_ipd,
                    const Tensor& af) const;
  const BeamformerNetConfig& config() const { return cfg_; }

 private:
  BeamformerNetConfig cfg_;
  LayerNorm cov_norm_;
  Linear cov_in_, cov_out_, spatial_in_, spatial_out_, head_;
  Gru cov_gru_, spatial_gru_;
  MultiHeadAttention attention_;
};

/// [N, F, T] tensor of a feature stack.
Tensor features_tensor(const FeatureStack& stack);
/// IRM [F, T] -> [2, F, T] with a zero imaginary plane; cRM passes through.
Tensor as_complex_mask(const Tensor& mask, MaskKind kind);
/// [T, F, 2M] tensor -> complex weights.
BeamWeights to_beam_weights(const Tensor& weights, int mics);

struct ExtractorConfig {
  PreSeparatorConfig pre = PreSeparatorConfig::toy();
  BeamformerNetConfig net = BeamformerNetConfig::toy();
  void validate() const;
};

struct ExtractorOutput {
  MaskPair masks;
  Tensor weights;   // [T, F, 2M]
  Tensor spectrum;  // [T, F, 2]
  Tensor waveform;  // [L]
};

/// Pre-separator and beamformer network wired end to end.
class NeuralExtractor {
 public:
  NeuralExtractor(const ExtractorConfig& cfg, std::uint64_t seed);
  NeuralExtractor(const NeuralExtractor&) = delete;
  NeuralExtractor& operator=(const NeuralExtractor&) = delete;
  NeuralExtractor(NeuralExtractor&&) = default;
  NeuralExtractor& operator=(NeuralExtractor&&) = default;

  ExtractorOutput forward(const Spectrogram& mixture, const FeatureStack& features,
                          std::size_t length) const;

  const ExtractorConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  ExtractorConfig cfg_;
  ParamStore params_;
  PreSeparator pre_;
  BeamformerNet net_;
};

}  // namespace beamkit::nn
