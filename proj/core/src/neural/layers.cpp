#include "beamkit/neural/layers.hpp"

#include <cmath>
#include <random>

#include "beamkit/error.hpp"
#include "beamkit/neural/ops.hpp"
#include "random.hpp"

namespace beamkit::nn {

namespace {

// FNV-1a, stable across platforms.
std::uint64_t name_hash(const std::string& name) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

Tensor ParamStore::add(const std::string& name, Shape shape, std::vector<double> values,
                       ParamInit init) {
  if (contains(name)) throw InvalidArgument("duplicate parameter name '" + name + "'");
  Tensor t = Tensor::parameter(std::move(shape), std::move(values));
  index_[name] = entries_.size();
  entries_.push_back({name, t, init});
  return t;
}

Tensor ParamStore::uniform(const std::string& name, Shape shape, int fan_in) {
  if (fan_in <= 0) throw InvalidArgument("parameter '" + name + "': fan_in must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::mt19937_64 rng(mix_seed(seed_ ^ name_hash(name)));
  std::vector<double> v(numel(shape));
  for (double& e : v) e = beamkit::uniform(rng, -bound, bound);
  return add(name, std::move(shape), std::move(v), {ParamInit::Kind::kUniformFanIn, bound, ""});
}

Tensor ParamStore::constant(const std::string& name, Shape shape, double value) {
  std::vector<double> v(numel(shape), value);
  return add(name, std::move(shape), std::move(v), {ParamInit::Kind::kConstant, value, ""});
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

void ParamStore::set_init(const std::string& name, ParamInit init) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  entries_[it->second].init = std::move(init);
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

Linear::Linear(ParamStore& store, const std::string& name, int in, int out, bool with_bias)
    : weight(store.uniform(name + ".weight", {out, in}, in)) {
  if (with_bias) bias = store.uniform(name + ".bias", {out}, in);
}

Tensor Linear::operator()(const Tensor& x) const { return linear(x, weight, bias); }

Conv2d::Conv2d(ParamStore& store, const std::string& name, int in, int out, int kernel_h,
               int kernel_w, int stride_h_, int pad_h_, int pad_w_)
    : weight(store.uniform(name + ".weight", {out, in, kernel_h, kernel_w}, in * kernel_h * kernel_w)),
      bias(store.uniform(name + ".bias", {out}, in * kernel_h * kernel_w)),
      stride_h(stride_h_),
      pad_h(pad_h_),
      pad_w(pad_w_) {}

Tensor Conv2d::operator()(const Tensor& x) const {
  return conv2d(x, weight, bias, stride_h, pad_h, pad_w);
}

ConvTranspose2d::ConvTranspose2d(ParamStore& store, const std::string& name, int in, int out,
                                 int kernel_h, int kernel_w, int stride_h_, int pad_h_, int pad_w_)
    : weight(store.uniform(name + ".weight", {in, out, kernel_h, kernel_w}, in * kernel_h * kernel_w)),
      bias(store.uniform(name + ".bias", {out}, in * kernel_h * kernel_w)),
      stride_h(stride_h_),
      pad_h(pad_h_),
      pad_w(pad_w_) {}

Tensor ConvTranspose2d::operator()(const Tensor& x) const {
  return conv_transpose2d(x, weight, bias, stride_h, pad_h, pad_w);
}

Conv1d::Conv1d(ParamStore& store, const std::string& name, int in, int out, int kernel,
               int dilation_, int pad_)
    : weight(store.uniform(name + ".weight", {out, in, kernel}, in * kernel)),
      bias(store.uniform(name + ".bias", {out}, in * kernel)),
      dilation(dilation_),
      pad(pad_) {}

Tensor Conv1d::operator()(const Tensor& x) const { return conv1d(x, weight, bias, dilation, pad); }

PRelu::PRelu(ParamStore& store, const std::string& name, double initial_slope)
    : slope(store.constant(name + ".slope", {1}, initial_slope)) {}

Tensor PRelu::operator()(const Tensor& x) const { return prelu(x, slope); }

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int dim)
    : gamma(store.constant(name + ".gamma", {dim}, 1.0)),
      beta(store.constant(name + ".beta", {dim}, 0.0)) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }

Tensor LayerNorm::channels(const Tensor& x) const {
  if (x.rank() != 2) throw InvalidArgument("channel norm expects [C, T], got " + shape_string(x.shape()));
  return permute(layer_norm(permute(x, {1, 0}), gamma, beta), {1, 0});
}

Gru::Gru(ParamStore& store, const std::string& name, int input, int hidden_, int num_layers)
    : hidden(hidden_) {
  if (num_layers < 1 || hidden_ < 1) throw InvalidArgument("GRU needs at least one layer and unit");
  for (int l = 0; l < num_layers; ++l) {
    const std::string p = name + ".l" + std::to_string(l);
    const int in = l == 0 ? input : hidden;
    layers.push_back({store.uniform(p + ".w_ih", {3 * hidden, in}, hidden),
                      store.uniform(p + ".w_hh", {3 * hidden, hidden}, hidden),
                      store.uniform(p + ".b_ih", {3 * hidden}, hidden),
                      store.uniform(p + ".b_hh", {3 * hidden}, hidden)});
  }
}

Tensor Gru::operator()(const Tensor& x) const {
  if (x.rank() != 3) throw InvalidArgument("GRU expects [S, B, D], got " + shape_string(x.shape()));
  Tensor seq = x;
  for (const auto& layer : layers) {
    // Input projections for every step at once, then the recurrence.
    seq = gru_sequence(linear(seq, layer.w_ih, layer.b_ih), layer.w_hh, layer.b_hh);
  }
  return seq;
}

Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  return attention(q, k, v);
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name, int dim_,
                                       int heads_)
    : wq(store, name + ".q", dim_, dim_),
      wk(store, name + ".k", dim_, dim_),
      wv(store, name + ".v", dim_, dim_),
      wo(store, name + ".out", dim_, dim_),
      dim(dim_),
      heads(heads_) {
  if (heads_ < 1 || dim_ % heads_ != 0) {
    throw InvalidArgument("attention dim " + std::to_string(dim_) + " not divisible by " +
                          std::to_string(heads_) + " heads");
  }
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& key_value) const {
  if (query.rank() != 3 || key_value.rank() != 3 || query.dim(0) != key_value.dim(0) ||
      query.dim(2) != dim || key_value.dim(2) != dim) {
    throw InvalidArgument("multi-head attention: query " + shape_string(query.shape()) +
                          " and key/value " + shape_string(key_value.shape()) +
                          " incompatible with dim " + std::to_string(dim));
  }
  const int B = query.dim(0), Lq = query.dim(1), Lk = key_value.dim(1);
  const int dh = dim / heads;
  auto split = [&](const Tensor& t, int len) {
    return reshape(permute(reshape(t, {B, len, heads, dh}), {0, 2, 1, 3}), {B * heads, len, dh});
  };
  const Tensor q = split(wq(query), Lq);
  const Tensor k = split(wk(key_value), Lk);
  const Tensor v = split(wv(key_value), Lk);
  const Tensor att = scaled_dot_product_attention(q, k, v);
  const Tensor merged =
      reshape(permute(reshape(att, {B, heads, Lq, dh}), {0, 2, 1, 3}), {B, Lq, dim});
  return wo(merged);
}

}  // namespace beamkit::nn
