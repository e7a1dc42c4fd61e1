#include "hyperadapters/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace hyperadapters::ops {

namespace {

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

void require_rank2(const char* op, const Var& a) {
  if (a.value().rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

void require_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands recorded on different tapes");
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  if (a.shape()[1] != b.shape()[0]) mismatch("matmul", a.shape(), b.shape());
  Tensor out({a.shape()[0], b.shape()[1]});
  out.matrix().noalias() = a.value().matrix() * b.value().matrix();
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.grad(self).matrix();
    if (t.requires_grad(ia)) t.grad(ia).matrix().noalias() += g * t.value(ib).matrix().transpose();
    if (t.requires_grad(ib)) t.grad(ib).matrix().noalias() += t.value(ia).matrix().transpose() * g;
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_rank2("matmul_nt", a);
  require_rank2("matmul_nt", b);
  if (a.shape()[1] != b.shape()[1]) mismatch("matmul_nt", a.shape(), b.shape());
  Tensor out({a.shape()[0], b.shape()[0]});
  out.matrix().noalias() = a.value().matrix() * b.value().matrix().transpose();
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.grad(self).matrix();
    if (t.requires_grad(ia)) t.grad(ia).matrix().noalias() += g * t.value(ib).matrix();
    if (t.requires_grad(ib)) t.grad(ib).matrix().noalias() += g.transpose() * t.value(ia).matrix();
  });
}

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape()) mismatch("add", a.shape(), b.shape());
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    for (auto id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      auto d = t.grad(id).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
  });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var add_bias(const Var& x, const Var& bias) {
  require_same_tape(x, bias);
  if (bias.value().rank() != 1 || bias.shape()[0] != x.value().cols()) {
    mismatch("add_bias", x.shape(), bias.shape());
  }
  Tensor out = x.value();
  out.matrix().rowwise() += bias.value().matrix().row(0);
  const auto ix = x.id(), ib = bias.id();
  return x.tape().record(std::move(out), {ix, ib}, [ix, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ix)) t.grad(ix).matrix() += g.matrix();
    if (t.requires_grad(ib)) t.grad(ib).matrix().row(0) += g.matrix().colwise().sum();
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape()) mismatch("mul", a.shape(), b.shape());
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto av = t.value(ia).data();
    const auto bv = t.value(ib).data();
    if (t.requires_grad(ia)) {
      auto d = t.grad(ia).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      auto d = t.grad(ib).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, factor](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    auto d = t.grad(ia).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * factor;
  });
}

Var add_scalar(const Var& a, double value) {
  Tensor out = a.value();
  for (auto& v : out.data()) v += value;
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    auto d = t.grad(ia).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto x = t.value(ia).data();
    auto d = t.grad(ia).data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (x[i] > 0.0) d[i] += g[i];
    }
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const auto rank = parts[0].value().rank();
  if (rank > 2) throw ShapeError("concat: rank > 2 unsupported, got " + shape_string(parts[0].shape()));
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids, offsets;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p);
    if (p.value().rank() != rank || p.value().rows() != rows) mismatch("concat", parts[0].shape(), p.shape());
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.value().cols();
  }
  Tensor out(rank == 1 ? Shape{cols} : Shape{rows, cols});
  auto om = out.matrix();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& v = parts[i].value();
    om.block(0, offsets[i], rows, v.cols()) = v.matrix();
  }
  return parts[0].tape().record(std::move(out), ids, [ids, offsets](Tape& t, std::size_t self) {
    const auto g = t.grad(self).matrix();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.requires_grad(ids[i])) continue;
      auto d = t.grad(ids[i]).matrix();
      d += g.block(0, offsets[i], d.rows(), d.cols());
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  require_rank2("concat_rows", parts[0]);
  const std::size_t cols = parts[0].shape()[1];
  std::size_t rows = 0;
  std::vector<std::size_t> ids, offsets;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p);
    if (p.value().rank() != 2 || p.shape()[1] != cols) mismatch("concat_rows", parts[0].shape(), p.shape());
    ids.push_back(p.id());
    offsets.push_back(rows);
    rows += p.shape()[0];
  }
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& v = parts[i].value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + offsets[i] * cols);
  }
  return parts[0].tape().record(std::move(out), ids, [ids, offsets, cols](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.requires_grad(ids[i])) continue;
      auto d = t.grad(ids[i]).data();
      for (std::size_t j = 0; j < d.size(); ++j) d[j] += g[offsets[i] * cols + j];
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const auto ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    auto d = t.grad(ia).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
  });
}

Var gather_rows(const Var& table, std::span<const std::int64_t> indices) {
  require_rank2("gather_rows", table);
  if (indices.empty()) throw ShapeError("gather_rows: empty index list");
  const std::size_t n_rows = table.shape()[0], cols = table.shape()[1];
  std::vector<std::int64_t> idx(indices.begin(), indices.end());
  Tensor out({idx.size(), cols});
  const auto src = table.value().data();
  auto dst = out.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < -1 || idx[r] >= static_cast<std::int64_t>(n_rows)) {
      throw std::out_of_range("gather_rows: index " + std::to_string(idx[r]) + " outside table " +
                              shape_string(table.shape()));
    }
    if (idx[r] < 0) continue;
    std::copy_n(src.begin() + idx[r] * cols, cols, dst.begin() + r * cols);
  }
  const auto it = table.id();
  return table.tape().record(std::move(out), {it}, [it, idx = std::move(idx), cols](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    auto d = t.grad(it).data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0) continue;
      for (std::size_t c = 0; c < cols; ++c) d[idx[r] * cols + c] += g[r * cols + c];
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  require_same_tape(x, gain);
  require_same_tape(x, bias);
  const std::size_t d = x.value().cols();
  if (gain.value().rank() != 1 || gain.shape()[0] != d) mismatch("layer_norm gain", x.shape(), gain.shape());
  if (bias.value().rank() != 1 || bias.shape()[0] != d) mismatch("layer_norm bias", x.shape(), bias.shape());
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t n = x.value().rows();
  auto xhat = std::make_shared<Tensor>(x.shape());
  auto inv_std = std::make_shared<std::vector<double>>(n);
  Tensor out(x.shape());
  const auto xv = x.value().data();
  const auto gv = gain.value().data();
  const auto bv = bias.value().data();
  auto xh = xhat->data();
  auto o = out.data();
  for (std::size_t r = 0; r < n; ++r) {
    double m = 0.0;
    for (std::size_t c = 0; c < d; ++c) m += xv[r * d + c];
    m /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xv[r * d + c] - m) * (xv[r * d + c] - m);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      xh[r * d + c] = (xv[r * d + c] - m) * is;
      o[r * d + c] = xh[r * d + c] * gv[c] + bv[c];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().record(std::move(out), {ix, ig, ib},
                         [ix, ig, ib, xhat, inv_std, n, d](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto xh = xhat->data();
    const auto gv = t.value(ig).data();
    if (t.requires_grad(ig)) {
      auto dg = t.grad(ig).data();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) dg[c] += g[r * d + c] * xh[r * d + c];
    }
    if (t.requires_grad(ib)) {
      auto db = t.grad(ib).data();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) db[c] += g[r * d + c];
    }
    if (t.requires_grad(ix)) {
      auto dx = t.grad(ix).data();
      std::vector<double> dxh(d);
      for (std::size_t r = 0; r < n; ++r) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          dxh[c] = g[r * d + c] * gv[c];
          m1 += dxh[c];
          m2 += dxh[c] * xh[r * d + c];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        for (std::size_t c = 0; c < d; ++c) {
          dx[r * d + c] += (*inv_std)[r] * (dxh[c] - m1 - xh[r * d + c] * m2);
        }
      }
    }
  });
}

namespace {

void softmax_rows(const Tensor& x, Tensor& out) {
  const std::size_t n = x.rows(), d = x.cols();
  const auto xv = x.data();
  auto o = out.data();
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < d; ++c) mx = std::max(mx, xv[r * d + c]);
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      o[r * d + c] = std::exp(xv[r * d + c] - mx);
      s += o[r * d + c];
    }
    for (std::size_t c = 0; c < d; ++c) o[r * d + c] /= s;
  }
}

void log_softmax_rows(const Tensor& x, Tensor& out) {
  const std::size_t n = x.rows(), d = x.cols();
  const auto xv = x.data();
  auto o = out.data();
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < d; ++c) mx = std::max(mx, xv[r * d + c]);
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += std::exp(xv[r * d + c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < d; ++c) o[r * d + c] = xv[r * d + c] - lse;
  }
}

}  // namespace

Var softmax(const Var& x) {
  Tensor out(x.shape());
  softmax_rows(x.value(), out);
  const auto ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    const auto& y = t.value(self);
    const std::size_t n = y.rows(), d = y.cols();
    const auto g = t.grad(self).data();
    const auto yv = y.data();
    auto dx = t.grad(ix).data();
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += g[r * d + c] * yv[r * d + c];
      for (std::size_t c = 0; c < d; ++c) dx[r * d + c] += yv[r * d + c] * (g[r * d + c] - dot);
    }
  });
}

Var log_softmax(const Var& x) {
  Tensor out(x.shape());
  log_softmax_rows(x.value(), out);
  const auto ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    const auto& y = t.value(self);
    const std::size_t n = y.rows(), d = y.cols();
    const auto g = t.grad(self).data();
    const auto yv = y.data();
    auto dx = t.grad(ix).data();
    for (std::size_t r = 0; r < n; ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < d; ++c) gs += g[r * d + c];
      for (std::size_t c = 0; c < d; ++c) dx[r * d + c] += g[r * d + c] - std::exp(yv[r * d + c]) * gs;
    }
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const auto ix = x.id();
  return x.tape().record(Tensor::scalar(s), {ix}, [ix](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (auto& d : t.grad(ix).data()) d += g;
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var variance(const Var& x) {
  const auto xv = x.value().data();
  const double m = hyperadapters::mean(xv);
  double acc = 0.0;
  for (double v : xv) acc += (v - m) * (v - m);
  const double n = static_cast<double>(xv.size());
  const auto ix = x.id();
  return x.tape().record(Tensor::scalar(acc / n), {ix}, [ix, m, n](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const auto xv = t.value(ix).data();
    auto d = t.grad(ix).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * 2.0 * (xv[i] - m) / n;
  });
}

Var dropout(const Var& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout probability must be in [0,1)");
  if (p == 0.0) return x;
  Tensor mask(x.shape());
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  for (auto& m : mask.data()) m = keep(rng) ? s : 0.0;
  return mul(x, x.tape().constant(std::move(mask)));
}

Var attention(const Var& q, const Var& k, const Var& v, const AttentionLayout& layout) {
  require_same_tape(q, k);
  require_same_tape(q, v);
  require_rank2("attention", q);
  require_rank2("attention", k);
  require_rank2("attention", v);
  const std::size_t B = layout.batch, Tq = layout.query_len, Tk = layout.key_len, H = layout.heads;
  const std::size_t d = q.shape()[1];
  if (q.shape()[0] != B * Tq) mismatch("attention query", q.shape(), Shape{B * Tq, d});
  if (k.shape() != Shape{B * Tk, d}) mismatch("attention key", k.shape(), Shape{B * Tk, d});
  if (v.shape() != k.shape()) mismatch("attention value", v.shape(), k.shape());
  if (H == 0 || d % H != 0) throw ShapeError("attention: width " + std::to_string(d) + " not divisible by heads");
  if (layout.key_lengths.size() != B) throw ShapeError("attention: key_lengths size differs from batch");
  const std::size_t dh = d / H;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));

  auto probs = std::make_shared<std::vector<MatrixRM>>(B * H);
  Tensor out({B * Tq, d});
  const auto Q = q.value().matrix();
  const auto K = k.value().matrix();
  const auto V = v.value().matrix();
  auto O = out.matrix();
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t len = std::min(layout.key_lengths[b], Tk);
    if (len == 0) throw ShapeError("attention: batch item with no valid keys");
    for (std::size_t h = 0; h < H; ++h) {
      MatrixRM s = Q.block(b * Tq, h * dh, Tq, dh) * K.block(b * Tk, h * dh, Tk, dh).transpose() * inv;
      for (std::size_t i = 0; i < Tq; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < Tk; ++j) {
          const bool masked = j >= len || (layout.causal && j > i);
          if (masked) s(i, j) = -std::numeric_limits<double>::infinity();
          mx = std::max(mx, s(i, j));
        }
        double z = 0.0;
        for (std::size_t j = 0; j < Tk; ++j) {
          s(i, j) = std::isinf(s(i, j)) ? 0.0 : std::exp(s(i, j) - mx);
          z += s(i, j);
        }
        s.row(i) /= z;
      }
      O.block(b * Tq, h * dh, Tq, dh).noalias() = s * V.block(b * Tk, h * dh, Tk, dh);
      (*probs)[b * H + h] = std::move(s);
    }
  }
  const auto iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape().record(std::move(out), {iq, ik, iv},
                         [iq, ik, iv, probs, B, Tq, Tk, H, dh, inv](Tape& t, std::size_t self) {
    const auto G = t.grad(self).matrix();
    const auto Q = t.value(iq).matrix();
    const auto K = t.value(ik).matrix();
    const auto V = t.value(iv).matrix();
    const bool gq = t.requires_grad(iq), gk = t.requires_grad(ik), gv = t.requires_grad(iv);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t h = 0; h < H; ++h) {
        const MatrixRM& P = (*probs)[b * H + h];
        const auto Gb = G.block(b * Tq, h * dh, Tq, dh);
        if (gv) t.grad(iv).matrix().block(b * Tk, h * dh, Tk, dh).noalias() += P.transpose() * Gb;
        if (!gq && !gk) continue;
        MatrixRM dP = Gb * V.block(b * Tk, h * dh, Tk, dh).transpose();
        Eigen::VectorXd rowdot = (dP.array() * P.array()).rowwise().sum();
        MatrixRM dS = (P.array() * (dP.colwise() - rowdot).array()).matrix() * inv;
        if (gq) t.grad(iq).matrix().block(b * Tq, h * dh, Tq, dh).noalias() += dS * K.block(b * Tk, h * dh, Tk, dh);
        if (gk) t.grad(ik).matrix().block(b * Tk, h * dh, Tk, dh).noalias() += dS.transpose() * Q.block(b * Tq, h * dh, Tq, dh);
      }
    }
  });
}

Var label_smoothed_cross_entropy(const Var& logits, std::span<const std::int64_t> targets, double alpha) {
  require_rank2("label_smoothed_cross_entropy", logits);
  const std::size_t n = logits.shape()[0], V = logits.shape()[1];
  if (targets.size() != n) {
    throw ShapeError("label_smoothed_cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_string(logits.shape()));
  }
  if (n == 0) throw std::invalid_argument("label_smoothed_cross_entropy: empty batch");
  if (alpha < 0.0 || alpha >= 1.0) throw std::invalid_argument("label smoothing must be in [0,1)");
  std::vector<std::int64_t> tgt(targets.begin(), targets.end());
  std::size_t count = 0;
  for (auto y : tgt) {
    if (y < -1 || y >= static_cast<std::int64_t>(V)) throw std::out_of_range("target id outside vocabulary");
    if (y >= 0) ++count;
  }
  if (count == 0) throw std::invalid_argument("label_smoothed_cross_entropy: every target is padding");

  auto logp = std::make_shared<Tensor>(logits.shape());
  log_softmax_rows(logits.value(), *logp);
  const double on = 1.0 - alpha + alpha / static_cast<double>(V);
  const double off = alpha / static_cast<double>(V);
  const auto lp = logp->data();
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (tgt[r] < 0) continue;
    double row_sum = 0.0;
    for (std::size_t c = 0; c < V; ++c) row_sum += lp[r * V + c];
    total += -(1.0 - alpha) * lp[r * V + tgt[r]] - off * row_sum;
  }
  const double denom = static_cast<double>(count);
  const auto il = logits.id();
  return logits.tape().record(Tensor::scalar(total / denom), {il},
                              [il, logp, tgt = std::move(tgt), on, off, denom, V](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0] / denom;
    const auto lp = logp->data();
    auto d = t.grad(il).data();
    for (std::size_t r = 0; r < tgt.size(); ++r) {
      if (tgt[r] < 0) continue;
      for (std::size_t c = 0; c < V; ++c) {
        const double q = static_cast<std::int64_t>(c) == tgt[r] ? on : off;
        d[r * V + c] += g * (std::exp(lp[r * V + c]) - q);
      }
    }
  });
}

}  // namespace hyperadapters::ops
