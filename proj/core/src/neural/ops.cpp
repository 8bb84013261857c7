#include "beamkit/neural/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <Eigen/Core>

#include "beamkit/error.hpp"

namespace beamkit::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                          " vs " + shape_string(b.shape()));
  }
}

void require_rank(const Tensor& x, int rank, const char* op) {
  if (x.rank() != rank) {
    throw InvalidArgument(std::string(op) + ": expected rank " + std::to_string(rank) +
                          ", got shape " + shape_string(x.shape()));
  }
}

Node& input(Node& self, std::size_t i) { return *self.inputs[i]; }

// Gradient buffer of input i, or nullptr if it does not need one.
double* grad_of(Node& self, std::size_t i) {
  Node& n = *self.inputs[i];
  return n.requires_grad ? n.ensure_grad().data() : nullptr;
}

std::vector<double> copy_values(const Tensor& x) { return {x.values().begin(), x.values().end()}; }

int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) throw InvalidArgument(std::string(op) + ": axis out of range");
  return a;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
  return make_result("add", a.shape(), std::move(v), {a, b}, [](Node& s) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (double* g = grad_of(s, k)) {
        for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += s.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] - b.values()[i];
  return make_result("sub", a.shape(), std::move(v), {a, b}, [](Node& s) {
    if (double* g = grad_of(s, 0)) {
      for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += s.grad[i];
    }
    if (double* g = grad_of(s, 1)) {
      for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] -= s.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * b.values()[i];
  return make_result("mul", a.shape(), std::move(v), {a, b}, [](Node& s) {
    const auto& av = input(s, 0).value;
    const auto& bv = input(s, 1).value;
    if (double* g = grad_of(s, 0)) {
      for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += s.grad[i] * bv[i];
    }
    if (double* g = grad_of(s, 1)) {
      for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += s.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> v = copy_values(x);
  for (double& e : v) e *= factor;
  return make_result("scale", x.shape(), std::move(v), {x}, [factor](Node& s) {
    if (double* g = grad_of(s, 0)) {
      for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += factor * s.grad[i];
    }
  });
}

Tensor add_scalar(const Tensor& x, double offset) {
  std::vector<double> v = copy_values(x);
  for (double& e : v) e += offset;
  return make_result("add_scalar", x.shape(), std::move(v), {x}, [](Node& s) {
    if (double* g = grad_of(s, 0)) {
      for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += s.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> v = copy_values(x);
  for (double& e : v) e = e >= 0.0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e));
  return make_result("sigmoid", x.shape(), std::move(v), {x}, [](Node& s) {
    if (double* g = grad_of(s, 0)) {
      for (std::size_t i = 0; i < s.grad.size(); ++i) {
        g[i] += s.grad[i] * s.value[i] * (1.0 - s.value[i]);
      }
    }
  });
}

Tensor tanh(const Tensor& x) {
  std::vector<double> v = copy_values(x);
  for (double& e : v) e = std::tanh(e);
  return make_result("tanh", x.shape(), std::move(v), {x}, [](Node& s) {
    if (double* g = grad_of(s, 0)) {
      for (std::size_t i = 0; i < s.grad.size(); ++i) {
        g[i] += s.grad[i] * (1.0 - s.value[i] * s.value[i]);
      }
    }
  });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  if (slope.size() != 1) throw InvalidArgument("prelu: slope must hold one value");
  const double a = slope.values()[0];
  std::vector<double> v = copy_values(x);
  for (double& e : v) e = e > 0.0 ? e : a * e;
  return make_result("prelu", x.shape(), std::move(v), {x, slope}, [](Node& s) {
    const auto& xv = input(s, 0).value;
    const double a = input(s, 1).value[0];
    double* gx = grad_of(s, 0);
    double* ga = grad_of(s, 1);
    for (std::size_t i = 0; i < s.grad.size(); ++i) {
      const bool pos = xv[i] > 0.0;
      if (gx) gx[i] += pos ? s.grad[i] : a * s.grad[i];
      if (ga && !pos) ga[0] += s.grad[i] * xv[i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw InvalidArgument("reshape: cannot view " + shape_string(x.shape()) + " as " +
                          shape_string(shape));
  }
  return make_result("reshape", std::move(shape), copy_values(x), {x}, [](Node& s) {
    if (double* g = grad_of(s, 0)) {
      for (std::size_t i = 0; i < s.grad.size(); ++i) g[i] += s.grad[i];
    }
  });
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r) throw InvalidArgument("permute: wrong permutation length");
  std::vector<bool> used(static_cast<std::size_t>(r), false);
  for (int p : perm) {
    if (p < 0 || p >= r || used[p]) throw InvalidArgument("permute: invalid permutation");
    used[p] = true;
  }
  const Shape& in = x.shape();
  std::vector<std::size_t> in_stride(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * static_cast<std::size_t>(in[i + 1]);
  Shape out(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) out[i] = in[perm[i]];

  // Source index for every output element.
  auto map = std::make_shared<std::vector<std::size_t>>(x.size());
  std::vector<int> idx(static_cast<std::size_t>(r), 0);
  for (std::size_t o = 0; o < x.size(); ++o) {
    std::size_t src = 0;
    for (int i = 0; i < r; ++i) src += static_cast<std::size_t>(idx[i]) * in_stride[perm[i]];
    (*map)[o] = src;
    for (int i = r - 1; i >= 0; --i) {
      if (++idx[i] < out[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> v(x.size());
  for (std::size_t o = 0; o < v.size(); ++o) v[o] = x.values()[(*map)[o]];
  return make_result("permute", std::move(out), std::move(v), {x}, [map](Node& s) {
    if (double* g = grad_of(s, 0)) {
      for (std::size_t o = 0; o < s.grad.size(); ++o) g[(*map)[o]] += s.grad[o];
    }
  });
}

Tensor slice(const Tensor& x, int axis, int start, int length) {
  const int a = normalize_axis(axis, x.rank(), "slice");
  const int extent = x.shape()[a];
  if (start < 0 || length < 0 || start + length > extent) {
    throw InvalidArgument("slice: range [" + std::to_string(start) + ", " +
                          std::to_string(start + length) + ") exceeds axis of size " +
                          std::to_string(extent));
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= static_cast<std::size_t>(x.shape()[i]);
  for (int i = a + 1; i < x.rank(); ++i) inner *= static_cast<std::size_t>(x.shape()[i]);
  Shape out = x.shape();
  out[a] = length;
  const std::size_t block = static_cast<std::size_t>(length) * inner;
  const std::size_t src_block = static_cast<std::size_t>(extent) * inner;
  const std::size_t offset = static_cast<std::size_t>(start) * inner;
  std::vector<double> v(outer * block);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.values().begin() + static_cast<std::ptrdiff_t>(o * src_block + offset), block,
                v.begin() + static_cast<std::ptrdiff_t>(o * block));
  }
  return make_result("slice", std::move(out), std::move(v), {x},
                     [outer, block, src_block, offset](Node& s) {
                       if (double* g = grad_of(s, 0)) {
                         for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t i = 0; i < block; ++i)
                             g[o * src_block + offset + i] += s.grad[o * block + i];
                       }
                     });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw InvalidArgument("concat: no inputs");
  const int r = parts.front().rank();
  const int a = normalize_axis(axis, r, "concat");
  Shape out = parts.front().shape();
  out[a] = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) throw InvalidArgument("concat: rank mismatch");
    for (int i = 0; i < r; ++i) {
      if (i != a && p.shape()[i] != parts.front().shape()[i]) {
        throw InvalidArgument("concat: shape mismatch " + shape_string(p.shape()) + " vs " +
                              shape_string(parts.front().shape()));
      }
    }
    out[a] += p.shape()[a];
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= static_cast<std::size_t>(out[i]);
  for (int i = a + 1; i < r; ++i) inner *= static_cast<std::size_t>(out[i]);
  const std::size_t dst_block = static_cast<std::size_t>(out[a]) * inner;
  std::vector<std::size_t> blocks, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    blocks.push_back(static_cast<std::size_t>(p.shape()[a]) * inner);
    offsets.push_back(off);
    off += blocks.back();
  }
  std::vector<double> v(outer * dst_block);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(parts[k].values().begin() + static_cast<std::ptrdiff_t>(o * blocks[k]),
                  blocks[k],
                  v.begin() + static_cast<std::ptrdiff_t>(o * dst_block + offsets[k]));
    }
  }
  return make_result("concat", std::move(out), std::move(v), parts,
                     [outer, dst_block, blocks, offsets](Node& s) {
                       for (std::size_t k = 0; k < blocks.size(); ++k) {
                         double* g = grad_of(s, k);
                         if (!g) continue;
                         for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t i = 0; i < blocks[k]; ++i)
                             g[o * blocks[k] + i] += s.grad[o * dst_block + offsets[k] + i];
                       }
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "linear weight");
  const int in = weight.shape()[1];
  const int out_dim = weight.shape()[0];
  if (x.rank() < 1 || x.dim(-1) != in) {
    throw InvalidArgument("linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                          shape_string(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.shape()[0] != out_dim)) {
    throw InvalidArgument("linear: bias shape mismatch");
  }
  const auto rows = static_cast<Eigen::Index>(x.size() / static_cast<std::size_t>(in));
  Shape out = x.shape();
  out.back() = out_dim;
  std::vector<double> v(static_cast<std::size_t>(rows) * out_dim);
  ConstMapMat xm(x.values().data(), rows, in);
  ConstMapMat wm(weight.values().data(), out_dim, in);
  MapMat ym(v.data(), rows, out_dim);
  ym.noalias() = xm * wm.transpose();
  if (bias.defined()) {
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.values().data(), out_dim);
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result("linear", std::move(out), std::move(v), inputs, [rows, in, out_dim](Node& s) {
    ConstMapMat gy(s.grad.data(), rows, out_dim);
    if (double* g = grad_of(s, 0)) {
      MapMat(g, rows, in).noalias() += gy * ConstMapMat(input(s, 1).value.data(), out_dim, in);
    }
    if (double* g = grad_of(s, 1)) {
      MapMat(g, out_dim, in).noalias() +=
          gy.transpose() * ConstMapMat(input(s, 0).value.data(), rows, in);
    }
    if (s.inputs.size() > 2) {
      if (double* g = grad_of(s, 2)) {
        Eigen::Map<Eigen::RowVectorXd>(g, out_dim) += gy.colwise().sum();
      }
    }
  });
}

Tensor gru_sequence(const Tensor& gates_x, const Tensor& w_hh, const Tensor& b_hh) {
  require_rank(gates_x, 3, "gru_sequence input");
  require_rank(w_hh, 2, "gru_sequence w_hh");
  const int steps = gates_x.shape()[0], batch = gates_x.shape()[1];
  const int H = w_hh.shape()[1];
  if (gates_x.shape()[2] != 3 * H || w_hh.shape()[0] != 3 * H || b_hh.rank() != 1 ||
      b_hh.shape()[0] != 3 * H) {
    throw InvalidArgument("gru_sequence: shapes " + shape_string(gates_x.shape()) + ", " +
                          shape_string(w_hh.shape()) + ", " + shape_string(b_hh.shape()) +
                          " are inconsistent");
  }
  const std::size_t plane = static_cast<std::size_t>(batch) * H;
  // Saved per step: r, z, n and the recurrent n-projection hn.
  auto saved = std::make_shared<std::vector<double>>(4 * plane * steps);
  std::vector<double> out(plane * steps);
  ConstMapMat w(w_hh.values().data(), 3 * H, H);
  const Eigen::Map<const Eigen::RowVectorXd> b(b_hh.values().data(), 3 * H);
  RowMat h = RowMat::Zero(batch, H);
  RowMat hs(batch, 3 * H);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (int t = 0; t < steps; ++t) {
    hs.noalias() = h * w.transpose();
    hs.rowwise() += b;
    ConstMapMat gx(gates_x.values().data() + t * 3 * plane, batch, 3 * H);
    double* sv = saved->data() + 4 * plane * t;
    for (int i = 0; i < batch; ++i) {
      for (int j = 0; j < H; ++j) {
        const double r = sig(gx(i, j) + hs(i, j));
        const double z = sig(gx(i, H + j) + hs(i, H + j));
        const double hn = hs(i, 2 * H + j);
        const double n = std::tanh(gx(i, 2 * H + j) + r * hn);
        const std::size_t k = static_cast<std::size_t>(i) * H + j;
        sv[k] = r;
        sv[plane + k] = z;
        sv[2 * plane + k] = n;
        sv[3 * plane + k] = hn;
        h(i, j) = n + z * (h(i, j) - n);
      }
    }
    MapMat(out.data() + t * plane, batch, H) = h;
  }
  return make_result(
      "gru_sequence", {steps, batch, H}, std::move(out), {gates_x, w_hh, b_hh},
      [steps, batch, H, plane, saved](Node& s) {
        double* gx_grad = grad_of(s, 0);
        double* w_grad = grad_of(s, 1);
        double* b_grad = grad_of(s, 2);
        ConstMapMat w(input(s, 1).value.data(), 3 * H, H);
        RowMat dh_next = RowMat::Zero(batch, H);
        RowMat dhs(batch, 3 * H);
        RowMat h_prev(batch, H);
        for (int t = steps - 1; t >= 0; --t) {
          const double* sv = saved->data() + 4 * plane * t;
          if (t > 0) {
            h_prev = ConstMapMat(s.value.data() + (t - 1) * plane, batch, H);
          } else {
            h_prev.setZero();
          }
          RowMat dgx(batch, 3 * H);
          for (int i = 0; i < batch; ++i) {
            for (int j = 0; j < H; ++j) {
              const std::size_t k = static_cast<std::size_t>(i) * H + j;
              const double r = sv[k], z = sv[plane + k], n = sv[2 * plane + k],
                           hn = sv[3 * plane + k];
              const double dh = s.grad[t * plane + k] + dh_next(i, j);
              const double dn = dh * (1.0 - z);
              const double dz = dh * (h_prev(i, j) - n);
              const double dan = dn * (1.0 - n * n);
              const double dar = dan * hn * r * (1.0 - r);
              const double daz = dz * z * (1.0 - z);
              dgx(i, j) = dar;
              dgx(i, H + j) = daz;
              dgx(i, 2 * H + j) = dan;
              dhs(i, j) = dar;
              dhs(i, H + j) = daz;
              dhs(i, 2 * H + j) = dan * r;
              dh_next(i, j) = dh * z;
            }
          }
          if (gx_grad) MapMat(gx_grad + t * 3 * plane, batch, 3 * H) += dgx;
          if (w_grad) MapMat(w_grad, 3 * H, H).noalias() += dhs.transpose() * h_prev;
          if (b_grad) Eigen::Map<Eigen::RowVectorXd>(b_grad, 3 * H) += dhs.colwise().sum();
          dh_next.noalias() += dhs * w;
        }
      });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  require_rank(q, 3, "attention query");
  require_rank(k, 3, "attention key");
  require_rank(v, 3, "attention value");
  const int batch = q.shape()[0], lq = q.shape()[1], d = q.shape()[2];
  const int lk = k.shape()[1], dv = v.shape()[2];
  if (k.shape()[0] != batch || v.shape()[0] != batch || k.shape()[2] != d || v.shape()[1] != lk) {
    throw InvalidArgument("attention: incompatible q/k/v shapes " + shape_string(q.shape()) + ", " +
                          shape_string(k.shape()) + ", " + shape_string(v.shape()));
  }
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  const std::size_t qs = static_cast<std::size_t>(lq) * d, ks = static_cast<std::size_t>(lk) * d,
                    vs = static_cast<std::size_t>(lk) * dv, os = static_cast<std::size_t>(lq) * dv,
                    ps = static_cast<std::size_t>(lq) * lk;
  auto probs = std::make_shared<std::vector<double>>(ps * batch);
  std::vector<double> out(os * batch);
  for (int b = 0; b < batch; ++b) {
    MapMat p(probs->data() + b * ps, lq, lk);
    p.noalias() = inv * ConstMapMat(q.values().data() + b * qs, lq, d) *
                  ConstMapMat(k.values().data() + b * ks, lk, d).transpose();
    for (int i = 0; i < lq; ++i) {
      const double mx = p.row(i).maxCoeff();
      p.row(i) = (p.row(i).array() - mx).exp();
      p.row(i) /= p.row(i).sum();
    }
    MapMat(out.data() + b * os, lq, dv).noalias() =
        p * ConstMapMat(v.values().data() + b * vs, lk, dv);
  }
  return make_result(
      "attention", {batch, lq, dv}, std::move(out), {q, k, v},
      [=](Node& s) {
        double* gq = grad_of(s, 0);
        double* gk = grad_of(s, 1);
        double* gv = grad_of(s, 2);
        RowMat dp(lq, lk);
        for (int b = 0; b < batch; ++b) {
          ConstMapMat p(probs->data() + b * ps, lq, lk);
          ConstMapMat go(s.grad.data() + b * os, lq, dv);
          ConstMapMat vm(input(s, 2).value.data() + b * vs, lk, dv);
          if (gv) MapMat(gv + b * vs, lk, dv).noalias() += p.transpose() * go;
          if (!gq && !gk) continue;
          dp.noalias() = go * vm.transpose();
          // Softmax Jacobian, then the 1/sqrt(d) scale.
          const Eigen::VectorXd dot = (dp.array() * p.array()).rowwise().sum();
          dp = (p.array() * (dp.array().colwise() - dot.array())) * inv;
          if (gq) {
            MapMat(gq + b * qs, lq, d).noalias() +=
                dp * ConstMapMat(input(s, 1).value.data() + b * ks, lk, d);
          }
          if (gk) {
            MapMat(gk + b * ks, lk, d).noalias() +=
                dp.transpose() * ConstMapMat(input(s, 0).value.data() + b * qs, lq, d);
          }
        }
      });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_rank(a, 3, "bmm lhs");
  require_rank(b, 3, "bmm rhs");
  const int batch = a.shape()[0], n = a.shape()[1], k = a.shape()[2];
  const int bk = transpose_b ? b.shape()[2] : b.shape()[1];
  const int m = transpose_b ? b.shape()[1] : b.shape()[2];
  if (b.shape()[0] != batch || bk != k) {
    throw InvalidArgument("bmm: incompatible shapes " + shape_string(a.shape()) + " and " +
                          shape_string(b.shape()));
  }
  std::vector<double> v(static_cast<std::size_t>(batch) * n * m);
  const std::size_t sa = static_cast<std::size_t>(n) * k;
  const std::size_t sb = static_cast<std::size_t>(k) * m;
  const std::size_t sy = static_cast<std::size_t>(n) * m;
  for (int i = 0; i < batch; ++i) {
    ConstMapMat am(a.values().data() + i * sa, n, k);
    MapMat ym(v.data() + i * sy, n, m);
    if (transpose_b) {
      ym.noalias() = am * ConstMapMat(b.values().data() + i * sb, m, k).transpose();
    } else {
      ym.noalias() = am * ConstMapMat(b.values().data() + i * sb, k, m);
    }
  }
  return make_result("bmm", {batch, n, m}, std::move(v), {a, b},
                     [batch, n, k, m, sa, sb, sy, transpose_b](Node& s) {
                       const auto& av = input(s, 0).value;
                       const auto& bv = input(s, 1).value;
                       double* ga = grad_of(s, 0);
                       double* gb = grad_of(s, 1);
                       for (int i = 0; i < batch; ++i) {
                         ConstMapMat gy(s.grad.data() + i * sy, n, m);
                         if (transpose_b) {
                           ConstMapMat bm(bv.data() + i * sb, m, k);
                           if (ga) MapMat(ga + i * sa, n, k).noalias() += gy * bm;
                           if (gb) {
                             MapMat(gb + i * sb, m, k).noalias() +=
                                 gy.transpose() * ConstMapMat(av.data() + i * sa, n, k);
                           }
                         } else {
                           ConstMapMat bm(bv.data() + i * sb, k, m);
                           if (ga) MapMat(ga + i * sa, n, k).noalias() += gy * bm.transpose();
                           if (gb) {
                             MapMat(gb + i * sb, k, m).noalias() +=
                                 ConstMapMat(av.data() + i * sa, n, k).transpose() * gy;
                           }
                         }
                       }
                     });
}

Tensor softmax(const Tensor& x) {
  if (x.rank() < 1) throw InvalidArgument("softmax: scalar input");
  const auto d = static_cast<std::size_t>(x.dim(-1));
  const std::size_t rows = x.size() / d;
  std::vector<double> v(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.values().data() + r * d;
    double* out = v.data() + r * d;
    const double mx = *std::max_element(in, in + d);
    double z = 0.0;
    for (std::size_t i = 0; i < d; ++i) z += (out[i] = std::exp(in[i] - mx));
    for (std::size_t i = 0; i < d; ++i) out[i] /= z;
  }
  return make_result("softmax", x.shape(), std::move(v), {x}, [rows, d](Node& s) {
    double* g = grad_of(s, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = s.value.data() + r * d;
      const double* gy = s.grad.data() + r * d;
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += gy[i] * y[i];
      for (std::size_t i = 0; i < d; ++i) g[r * d + i] += y[i] * (gy[i] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const int d = x.dim(-1);
  if (gamma.size() != static_cast<std::size_t>(d) || beta.size() != static_cast<std::size_t>(d)) {
    throw InvalidArgument("layer_norm: gamma/beta must match the last axis");
  }
  const std::size_t rows = x.size() / static_cast<std::size_t>(d);
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> v(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.values().data() + r * d;
    double mu = 0.0;
    for (int i = 0; i < d; ++i) mu += in[i];
    mu /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) var += (in[i] - mu) * (in[i] - mu);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (int i = 0; i < d; ++i) {
      const double h = (in[i] - mu) * is;
      (*xhat)[r * d + i] = h;
      v[r * d + i] = h * gamma.values()[i] + beta.values()[i];
    }
  }
  return make_result("layer_norm", x.shape(), std::move(v), {x, gamma, beta},
                     [rows, d, xhat, inv_std](Node& s) {
                       const auto& gam = input(s, 1).value;
                       double* gx = grad_of(s, 0);
                       double* gg = grad_of(s, 1);
                       double* gb = grad_of(s, 2);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* gy = s.grad.data() + r * d;
                         const double* h = xhat->data() + r * d;
                         double mean_g = 0.0, mean_gh = 0.0;
                         for (int i = 0; i < d; ++i) {
                           const double gh = gy[i] * gam[i];
                           mean_g += gh;
                           mean_gh += gh * h[i];
                           if (gg) gg[i] += gy[i] * h[i];
                           if (gb) gb[i] += gy[i];
                         }
                         mean_g /= d;
                         mean_gh /= d;
                         if (gx) {
                           for (int i = 0; i < d; ++i) {
                             gx[r * d + i] +=
                                 (*inv_std)[r] * (gy[i] * gam[i] - mean_g - h[i] * mean_gh);
                           }
                         }
                       }
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride_h, int pad_h,
              int pad_w) {
  require_rank(x, 3, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  const int cin = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
  const int cout = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
  if (w.shape()[1] != cin) {
    throw InvalidArgument("conv2d: input has " + std::to_string(cin) + " channels, weight expects " +
                          std::to_string(w.shape()[1]));
  }
  if (b.size() != static_cast<std::size_t>(cout)) throw InvalidArgument("conv2d: bias size mismatch");
  if (stride_h < 1) throw InvalidArgument("conv2d: stride must be >= 1");
  const int ho = (h + 2 * pad_h - kh) / stride_h + 1;
  const int wo = wd + 2 * pad_w - kw + 1;
  if (ho <= 0 || wo <= 0) throw InvalidArgument("conv2d: kernel larger than padded input");

  const auto& xv = x.values();
  const auto& wv = w.values();
  std::vector<double> v(static_cast<std::size_t>(cout) * ho * wo);
  for (int o = 0; o < cout; ++o) {
    double* yo = v.data() + static_cast<std::size_t>(o) * ho * wo;
    std::fill(yo, yo + static_cast<std::size_t>(ho) * wo, b.values()[o]);
    for (int c = 0; c < cin; ++c)
      for (int p = 0; p < kh; ++p)
        for (int q = 0; q < kw; ++q) {
          const double wt = wv[((static_cast<std::size_t>(o) * cin + c) * kh + p) * kw + q];
          for (int i = 0; i < ho; ++i) {
            const int hi = i * stride_h + p - pad_h;
            if (hi < 0 || hi >= h) continue;
            const double* xr = xv.data() + (static_cast<std::size_t>(c) * h + hi) * wd;
            double* yr = yo + static_cast<std::size_t>(i) * wo;
            const int j0 = std::max(0, pad_w - q);
            const int j1 = std::min(wo, wd + pad_w - q);
            for (int j = j0; j < j1; ++j) yr[j] += wt * xr[j + q - pad_w];
          }
        }
  }
  return make_result(
      "conv2d", {cout, ho, wo}, std::move(v), {x, w, b},
      [=](Node& s) {
        const auto& xv = input(s, 0).value;
        const auto& wv = input(s, 1).value;
        double* gx = grad_of(s, 0);
        double* gw = grad_of(s, 1);
        double* gb = grad_of(s, 2);
        for (int o = 0; o < cout; ++o) {
          const double* gy = s.grad.data() + static_cast<std::size_t>(o) * ho * wo;
          if (gb) {
            for (std::size_t i = 0; i < static_cast<std::size_t>(ho) * wo; ++i) gb[o] += gy[i];
          }
          for (int c = 0; c < cin; ++c)
            for (int p = 0; p < kh; ++p)
              for (int q = 0; q < kw; ++q) {
                const std::size_t widx = ((static_cast<std::size_t>(o) * cin + c) * kh + p) * kw + q;
                const double wt = wv[widx];
                double acc = 0.0;
                for (int i = 0; i < ho; ++i) {
                  const int hi = i * stride_h + p - pad_h;
                  if (hi < 0 || hi >= h) continue;
                  const std::size_t xrow = (static_cast<std::size_t>(c) * h + hi) * wd;
                  const double* gr = gy + static_cast<std::size_t>(i) * wo;
                  const int j0 = std::max(0, pad_w - q);
                  const int j1 = std::min(wo, wd + pad_w - q);
                  for (int j = j0; j < j1; ++j) {
                    acc += gr[j] * xv[xrow + j + q - pad_w];
                    if (gx) gx[xrow + j + q - pad_w] += gr[j] * wt;
                  }
                }
                if (gw) gw[widx] += acc;
              }
        }
      });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride_h,
                        int pad_h, int pad_w) {
  require_rank(x, 3, "conv_transpose2d input");
  require_rank(w, 4, "conv_transpose2d weight");
  const int cin = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
  const int cout = w.shape()[1], kh = w.shape()[2], kw = w.shape()[3];
  if (w.shape()[0] != cin) {
    throw InvalidArgument("conv_transpose2d: input has " + std::to_string(cin) +
                          " channels, weight expects " + std::to_string(w.shape()[0]));
  }
  if (b.size() != static_cast<std::size_t>(cout)) {
    throw InvalidArgument("conv_transpose2d: bias size mismatch");
  }
  const int ho = (h - 1) * stride_h - 2 * pad_h + kh;
  const int wo = wd - 1 - 2 * pad_w + kw;
  if (ho <= 0 || wo <= 0) throw InvalidArgument("conv_transpose2d: empty output");

  const auto& xv = x.values();
  const auto& wv = w.values();
  std::vector<double> v(static_cast<std::size_t>(cout) * ho * wo);
  for (int o = 0; o < cout; ++o) {
    std::fill(v.begin() + static_cast<std::ptrdiff_t>(o) * ho * wo,
              v.begin() + static_cast<std::ptrdiff_t>(o + 1) * ho * wo, b.values()[o]);
  }
  for (int c = 0; c < cin; ++c)
    for (int o = 0; o < cout; ++o)
      for (int p = 0; p < kh; ++p)
        for (int q = 0; q < kw; ++q) {
          const double wt = wv[((static_cast<std::size_t>(c) * cout + o) * kh + p) * kw + q];
          for (int i = 0; i < h; ++i) {
            const int oi = i * stride_h + p - pad_h;
            if (oi < 0 || oi >= ho) continue;
            const double* xr = xv.data() + (static_cast<std::size_t>(c) * h + i) * wd;
            double* yr = v.data() + (static_cast<std::size_t>(o) * ho + oi) * wo;
            const int j0 = std::max(0, pad_w - q);
            const int j1 = std::min(wd, wo + pad_w - q);
            for (int j = j0; j < j1; ++j) yr[j + q - pad_w] += wt * xr[j];
          }
        }
  return make_result(
      "conv_transpose2d", {cout, ho, wo}, std::move(v), {x, w, b},
      [=](Node& s) {
        const auto& xv = input(s, 0).value;
        const auto& wv = input(s, 1).value;
        double* gx = grad_of(s, 0);
        double* gw = grad_of(s, 1);
        double* gb = grad_of(s, 2);
        if (gb) {
          for (int o = 0; o < cout; ++o)
            for (std::size_t i = 0; i < static_cast<std::size_t>(ho) * wo; ++i)
              gb[o] += s.grad[static_cast<std::size_t>(o) * ho * wo + i];
        }
        for (int c = 0; c < cin; ++c)
          for (int o = 0; o < cout; ++o)
            for (int p = 0; p < kh; ++p)
              for (int q = 0; q < kw; ++q) {
                const std::size_t widx = ((static_cast<std::size_t>(c) * cout + o) * kh + p) * kw + q;
                const double wt = wv[widx];
                double acc = 0.0;
                for (int i = 0; i < h; ++i) {
                  const int oi = i * stride_h + p - pad_h;
                  if (oi < 0 || oi >= ho) continue;
                  const std::size_t xrow = (static_cast<std::size_t>(c) * h + i) * wd;
                  const double* gr = s.grad.data() + (static_cast<std::size_t>(o) * ho + oi) * wo;
                  const int j0 = std::max(0, pad_w - q);
                  const int j1 = std::min(wd, wo + pad_w - q);
                  for (int j = j0; j < j1; ++j) {
                    acc += gr[j + q - pad_w] * xv[xrow + j];
                    if (gx) gx[xrow + j] += gr[j + q - pad_w] * wt;
                  }
                }
                if (gw) gw[widx] += acc;
              }
      });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int dilation, int pad) {
  require_rank(x, 2, "conv1d input");
  require_rank(w, 3, "conv1d weight");
  const int cin = x.shape()[0], t_in = x.shape()[1];
  const int cout = w.shape()[0], k = w.shape()[2];
  if (w.shape()[1] != cin) {
    throw InvalidArgument("conv1d: input has " + std::to_string(cin) + " channels, weight expects " +
                          std::to_string(w.shape()[1]));
  }
  if (b.size() != static_cast<std::size_t>(cout)) throw InvalidArgument("conv1d: bias size mismatch");
  if (dilation < 1 || pad < 0) throw InvalidArgument("conv1d: invalid dilation or padding");
  const int t_out = t_in + 2 * pad - dilation * (k - 1);
  if (t_out <= 0) throw InvalidArgument("conv1d: kernel larger than padded input");

  // Zero-padded input copy makes every tap a contiguous column block.
  const int t_pad = t_in + 2 * pad;
  auto padded = std::make_shared<RowMat>(RowMat::Zero(cin, t_pad));
  padded->middleCols(pad, t_in) = ConstMapMat(x.values().data(), cin, t_in);
  // Weight rearranged per tap: taps[k] is [cout, cin].
  std::vector<RowMat> taps(static_cast<std::size_t>(k), RowMat(cout, cin));
  for (int o = 0; o < cout; ++o)
    for (int c = 0; c < cin; ++c)
      for (int j = 0; j < k; ++j) taps[j](o, c) = w.values()[(static_cast<std::size_t>(o) * cin + c) * k + j];

  std::vector<double> v(static_cast<std::size_t>(cout) * t_out);
  MapMat y(v.data(), cout, t_out);
  y.colwise() = Eigen::Map<const Eigen::VectorXd>(b.values().data(), cout);
  for (int j = 0; j < k; ++j) y.noalias() += taps[j] * padded->middleCols(j * dilation, t_out);

  return make_result("conv1d", {cout, t_out}, std::move(v), {x, w, b},
                     [=](Node& s) {
                       ConstMapMat gy(s.grad.data(), cout, t_out);
                       if (double* gb = grad_of(s, 2)) {
                         Eigen::Map<Eigen::VectorXd>(gb, cout) += gy.rowwise().sum();
                       }
                       if (double* gw = grad_of(s, 1)) {
                         for (int j = 0; j < k; ++j) {
                           const RowMat gk = gy * padded->middleCols(j * dilation, t_out).transpose();
                           for (int o = 0; o < cout; ++o)
                             for (int c = 0; c < cin; ++c)
                               gw[(static_cast<std::size_t>(o) * cin + c) * k + j] += gk(o, c);
                         }
                       }
                       if (double* gx = grad_of(s, 0)) {
                         RowMat gpad = RowMat::Zero(cin, t_pad);
                         for (int j = 0; j < k; ++j) {
                           gpad.middleCols(j * dilation, t_out).noalias() += taps[j].transpose() * gy;
                         }
                         MapMat(gx, cin, t_in) += gpad.middleCols(pad, t_in);
                       }
                     });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result("sum", {1}, {total}, {x}, [](Node& s) {
    if (double* g = grad_of(s, 0)) {
      for (std::size_t i = 0; i < input(s, 0).value.size(); ++i) g[i] += s.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mse");
  const Tensor d = sub(a, b);
  return mean(mul(d, d));
}

}  // namespace beamkit::nn
