#pragma once

// JSON mappings shared by the checkpoint container and the pipeline config.

#include <json.hpp>

#include "beamkit/error.hpp"
#include "beamkit/neural/model.hpp"
#include "beamkit/neural/train.hpp"
#include "beamkit/signal_io.hpp"

namespace beamkit {

inline const char* window_name(WindowKind w) {
  switch (w) {
    case WindowKind::kSqrtHann: return "sqrt_hann";
    case WindowKind::kHann: return "hann";
    case WindowKind::kRectangular: return "rectangular";
  }
  return "sqrt_hann";
}

inline WindowKind parse_window(const std::string& s) {
  if (s == "sqrt_hann") return WindowKind::kSqrtHann;
  if (s == "hann") return WindowKind::kHann;
  if (s == "rectangular") return WindowKind::kRectangular;
  throw InvalidArgument("unknown window '" + s + "'");
}

inline void to_json(nlohmann::json& j, const StftConfig& c) {
  j = {{"window_len", c.window_len}, {"hop", c.hop}, {"fft_size", c.fft_size},
       {"window", window_name(c.window)}};
}

inline void from_json(const nlohmann::json& j, StftConfig& c) {
  c.window_len = j.value("window_len", c.window_len);
  c.hop = j.value("hop", c.hop);
  c.fft_size = j.value("fft_size", c.fft_size);
  if (j.contains("window")) c.window = parse_window(j.at("window").get<std::string>());
}

namespace nn {

inline void to_json(nlohmann::json& j, const PreSeparatorConfig& c) {
  j = {{"unet_channels", c.unet_channels}, {"bins", c.bins},
       {"tcn_repeats", c.tcn_repeats},     {"tcn_stack", c.tcn_stack},
       {"tcn_channels", c.tcn_channels},   {"tcn_kernel", c.tcn_kernel},
       {"mask_kind", to_string(c.mask_kind)}};
}

inline void from_json(const nlohmann::json& j, PreSeparatorConfig& c) {
  c.unet_channels = j.value("unet_channels", c.unet_channels);
  c.bins = j.value("bins", c.bins);
  c.tcn_repeats = j.value("tcn_repeats", c.tcn_repeats);
  c.tcn_stack = j.value("tcn_stack", c.tcn_stack);
  c.tcn_channels = j.value("tcn_channels", c.tcn_channels);
  c.tcn_kernel = j.value("tcn_kernel", c.tcn_kernel);
  if (j.contains("mask_kind")) c.mask_kind = parse_mask_kind(j.at("mask_kind").get<std::string>());
}

inline void to_json(nlohmann::json& j, const BeamformerNetConfig& c) {
  j = {{"mics", c.mics},
       {"pairs", c.pairs},
       {"gru_layers", c.gru_layers},
       {"gru_hidden", c.gru_hidden},
       {"attention_dim", c.attention_dim},
       {"attention_heads", c.attention_heads},
       {"reference_mic", c.reference_mic},
       {"output_dim", c.output_dim()}};
}

inline void from_json(const nlohmann::json& j, BeamformerNetConfig& c) {
  c.mics = j.value("mics", c.mics);
  c.pairs = j.value("pairs", c.pairs);
  c.gru_layers = j.value("gru_layers", c.gru_layers);
  c.gru_hidden = j.value("gru_hidden", c.gru_hidden);
  c.attention_dim = j.value("attention_dim", c.attention_dim);
  c.attention_heads = j.value("attention_heads", c.attention_heads);
  c.reference_mic = j.value("reference_mic", c.reference_mic);
}

inline void to_json(nlohmann::json& j, const ExtractorConfig& c) {
  j = {{"preseparator", c.pre}, {"beamformer", c.net}};
}

inline void from_json(const nlohmann::json& j, ExtractorConfig& c) {
  if (j.contains("preseparator")) j.at("preseparator").get_to(c.pre);
  if (j.contains("beamformer")) j.at("beamformer").get_to(c.net);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"seed", c.seed},
       {"steps", c.steps},
       {"learning_rate", c.learning_rate},
       {"lr_decay", c.lr_decay},
       {"grad_clip", c.grad_clip},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"epsilon", c.epsilon},
       {"smoothing", c.smoothing}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.seed = j.value("seed", c.seed);
  c.steps = j.value("steps", c.steps);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.smoothing = j.value("smoothing", c.smoothing);
}

}  // namespace nn
}  // namespace beamkit
