#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "beamkit/neural/tensor.hpp"

namespace beamkit::nn {

/// How a parameter was initialized. Kept with the parameter so checkpoints
/// and configs can report it.
struct ParamInit {
  enum class Kind { kUniformFanIn, kConstant, kCustom };
  Kind kind = Kind::kUniformFanIn;
  double value = 0.0;  // bound for uniform, fill value for constant
  std::string note;    // free text for custom initializations
};

struct ParamEntry {
  std::string name;
  Tensor tensor;
  ParamInit init;
};

/// Named trainable parameters in creation order. Each tensor's initial values
/// come from its own stream seeded by (seed, name), so adding a parameter does
/// not disturb the others.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Uniform in +-1/sqrt(fan_in).
  Tensor uniform(const std::string& name, Shape shape, int fan_in);
  Tensor constant(const std::string& name, Shape shape, double value);

  /// Marks an entry whose values were overwritten after creation.
  void set_init(const std::string& name, ParamInit init);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<ParamEntry>& entries() { return entries_; }
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_values() const;

  void zero_grad();

 private:
  Tensor add(const std::string& name, Shape shape, std::vector<double> values, ParamInit init);

  std::uint64_t seed_;
  std::vector<ParamEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

struct Linear {
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in, int out, bool bias = true);
  Tensor operator()(const Tensor& x) const;

  Tensor weight;  // [out, in]
  Tensor bias;    // [out] or undefined
};

struct Conv2d {
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int in, int out, int kernel_h, int kernel_w,
         int stride_h, int pad_h, int pad_w);
  Tensor operator()(const Tensor& x) const;

  Tensor weight;  // [out, in, kh, kw]
  Tensor bias;
  int stride_h = 1, pad_h = 0, pad_w = 0;
};

struct ConvTranspose2d {
  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore& store, const std::string& name, int in, int out, int kernel_h,
                  int kernel_w, int stride_h, int pad_h, int pad_w);
  Tensor operator()(const Tensor& x) const;

  Tensor weight;  // [in, out, kh, kw]
  Tensor bias;
  int stride_h = 1, pad_h = 0, pad_w = 0;
};

struct Conv1d {
  Conv1d() = default;
  Conv1d(ParamStore& store, const std::string& name, int in, int out, int kernel, int dilation,
         int pad);
  Tensor operator()(const Tensor& x) const;

  Tensor weight;  // [out, in, k]
  Tensor bias;
  int dilation = 1, pad = 0;
};

struct PRelu {
  PRelu() = default;
  PRelu(ParamStore& store, const std::string& name, double initial_slope = 0.25);
  Tensor operator()(const Tensor& x) const;

  Tensor slope;  // [1]
};

struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, int dim);
  /// Normalizes the last axis.
  Tensor operator()(const Tensor& x) const;
  /// Normalizes the channel axis of a [C, T] map at every time step.
  Tensor channels(const Tensor& x) const;

  Tensor gamma, beta;
};

/// Multi-layer GRU over a sequence-first input [S, B, D] -> [S, B, H]; the
/// state starts at zero on every call.
struct Gru {
  Gru() = default;
  Gru(ParamStore& store, const std::string& name, int input, int hidden, int layers);
  Tensor operator()(const Tensor& x) const;

  struct Layer {
    Tensor w_ih, w_hh, b_ih, b_hh;  // gate order r, z, n
  };
  std::vector<Layer> layers;
  int hidden = 0;
};

/// softmax(q k^T / sqrt(d)) v over batched [B, L, d] inputs.
Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v);

struct MultiHeadAttention {
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& name, int dim, int heads);
  /// query [B, Lq, D], key_value [B, Lk, D] -> [B, Lq, D].
  Tensor operator()(const Tensor& query, const Tensor& key_value) const;

  Linear wq, wk, wv, wo;
  int dim = 0, heads = 1;
};

}  // namespace beamkit::nn
