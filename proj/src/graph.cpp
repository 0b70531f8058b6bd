#include "seizset/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>

#include "seizset/errors.hpp"

namespace seizset {

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad(*this); }

// ---------------------------------------------------------------------------
// Graph

Var Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && recording_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::record(Tensor value, std::vector<int> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  if (recording_) {
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](int i) { return nodes_[i].requires_grad; });
    if (n.requires_grad) {
      n.inputs = std::move(inputs);
      n.backward = std::move(backward);
    }
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

const Graph::Node& Graph::node(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw StateError("variable " + std::to_string(id) + " is not part of this graph");
  }
  return nodes_[id];
}

const Tensor& Graph::value(int id) const { return node(id).value; }
bool Graph::requires_grad(int id) const { return node(id).requires_grad; }

const Tensor& Graph::grad(Var v) const {
  const Node& n = node(v.id());
  if (!backward_done_) throw StateError("gradient requested before backward()");
  if (n.grad.empty()) {
    auto& mutable_node = const_cast<Node&>(n);
    mutable_node.grad = Tensor(n.value.shape(), 0.0);
  }
  return n.grad;
}

Tensor& Graph::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

bool Graph::has_grad(int id) const { return !node(id).grad.empty(); }

void Graph::backward(Var output, const Tensor& seed) {
  if (nodes_.empty()) throw StateError("backward() called on an empty graph; run a forward pass first");
  const Node& out = node(output.id());
  if (!recording_) throw StateError("backward() on a graph built without gradient recording");
  if (backward_done_) throw StateError("backward() already ran on this graph; rebuild it for another pass");
  if (seed.shape() != out.value.shape()) {
    throw DimensionError("seed shape " + shape_string(seed.shape()) + " differs from output shape " +
                         shape_string(out.value.shape()));
  }
  grad_buffer(output.id()) = seed;
  for (int id = output.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
  backward_done_ = true;
}

void Graph::backward(Var scalar_output) {
  const Tensor& v = value(scalar_output);
  if (v.size() != 1) throw DimensionError("scalar backward() needs a 1-element output, got " + shape_string(v.shape()));
  backward(scalar_output, Tensor(v.shape(), 1.0));
}

// ---------------------------------------------------------------------------
// Kernels

namespace {

void require_same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw StateError("operands belong to different graphs");
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + " expects a rank-2 tensor, got " + shape_string(t.shape()));
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m x k] += a[m x n] * b[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += ai[j] * bp[j];
      ci[p] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

void accumulate(Graph& g, int target, const Tensor& delta) {
  if (!g.requires_grad(target)) return;
  auto dst = g.grad_buffer(target).values();
  auto src = delta.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Operations

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
  if (bv.shape()[0] != k) {
    throw DimensionError("matmul inner extents differ: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  Tensor out({m, n}, 0.0);
  gemm_nn(av.values().data(), bv.values().data(), out.values().data(), m, k, n);
  const int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib}, [ia, ib, m, k, n](Graph& g, int self) {
    const Tensor& dc = g.grad_buffer(self);
    if (g.requires_grad(ia)) {
      gemm_nt(dc.values().data(), g.value(ib).values().data(), g.grad_buffer(ia).values().data(), m, n, k);
    }
    if (g.requires_grad(ib)) {
      gemm_tn(g.value(ia).values().data(), dc.values().data(), g.grad_buffer(ib).values().data(), m, k, n);
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_rank2(av, "transpose");
  const std::size_t m = av.shape()[0], n = av.shape()[1];
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
  const int ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, m, n](Graph& g, int self) {
    const Tensor& d = g.grad_buffer(self);
    Tensor& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) da.at(i, j) += d.at(j, i);
  });
}

Var add(Var a, Var b) {
  require_same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw DimensionError("add shapes differ: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Tensor& d = g.grad_buffer(self);
    accumulate(g, ia, d);
    accumulate(g, ib, d);
  });
}

Var add_row(Var x, Var bias) {
  require_same_graph(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.size() != xv.cols()) {
    throw DimensionError("bias " + shape_string(bv.shape()) + " does not broadcast over " + shape_string(xv.shape()));
  }
  Tensor out = xv;
  const std::size_t rows = xv.rows(), cols = xv.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  const int ix = x.id(), ib = bias.id();
  return x.graph().record(std::move(out), {ix, ib}, [ix, ib, rows, cols](Graph& g, int self) {
    const Tensor& d = g.grad_buffer(self);
    accumulate(g, ix, d);
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad_buffer(ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) db[c] += d[r * cols + c];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw DimensionError("mul shapes differ: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Tensor& d = g.grad_buffer(self);
    if (g.requires_grad(ia)) {
      Tensor& da = g.grad_buffer(ia);
      const Tensor& bv = g.value(ib);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += d[i] * bv[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad_buffer(ib);
      const Tensor& av = g.value(ia);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += d[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= factor;
  const int ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, factor](Graph& g, int self) {
    const Tensor& d = g.grad_buffer(self);
    Tensor& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += factor * d[i];
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  const int ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia](Graph& g, int self) {
    const Tensor& d = g.grad_buffer(self);
    const Tensor& x = g.value(ia);
    Tensor& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < da.size(); ++i)
      if (x[i] > 0.0) da[i] += d[i];
  });
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  const int ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia](Graph& g, int self) {
    const Tensor& d = g.grad_buffer(self);
    const Tensor& y = g.value(self);
    Tensor& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += d[i] * y[i] * (1.0 - y[i]);
  });
}

Var softmax_rows(Var x) {
  const Tensor& xv = x.value();
  Tensor out = xv;
  const std::size_t rows = xv.rows(), cols = xv.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = out.row_view(r);
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : row) {
      if (std::isnan(v)) throw NumericError("softmax_rows: NaN in row " + std::to_string(r));
      peak = std::max(peak, v);
    }
    double total = 0.0;
    for (double& v : row) {
      v = std::exp(v - peak);
      total += v;
    }
    for (double& v : row) v /= total;
  }
  const int ix = x.id();
  return x.graph().record(std::move(out), {ix}, [ix, rows, cols](Graph& g, int self) {
    const Tensor& d = g.grad_buffer(self);
    const Tensor& y = g.value(self);
    Tensor& dx = g.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += d[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] += y[r * cols + c] * (d[r * cols + c] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double epsilon) {
  require_same_graph(x, gain);
  require_same_graph(x, bias);
  const Tensor& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (cols < 2) throw DimensionError("layer_norm needs at least 2 features, got " + shape_string(xv.shape()));
  if (gain.value().size() != cols || bias.value().size() != cols) {
    throw DimensionError("layer_norm gain/bias width must be " + std::to_string(cols));
  }
  auto normalized = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor out(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    auto in = xv.row_view(r);
    double mu = 0.0;
    for (double v : in) mu += v;
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : in) var += (v - mu) * (v - mu);
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + epsilon);
    (*inv_std)[r] = inv;
    for (std::size_t c = 0; c < cols; ++c) {
      const double xhat = (in[c] - mu) * inv;
      normalized->at(r, c) = xhat;
      out.at(r, c) = gv[c] * xhat + bv[c];
    }
  }
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.graph().record(std::move(out), {ix, ig, ib},
                          [ix, ig, ib, rows, cols, normalized, inv_std](Graph& g, int self) {
                            const Tensor& d = g.grad_buffer(self);
                            const Tensor& gv = g.value(ig);
                            const double n = static_cast<double>(cols);
                            if (g.requires_grad(ig) || g.requires_grad(ib)) {
                              Tensor& dg = g.grad_buffer(ig);
                              Tensor& db = g.grad_buffer(ib);
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t c = 0; c < cols; ++c) {
                                  dg[c] += d.at(r, c) * normalized->at(r, c);
                                  db[c] += d.at(r, c);
                                }
                            }
                            if (!g.requires_grad(ix)) return;
                            Tensor& dx = g.grad_buffer(ix);
                            std::vector<double> dxhat(cols);
                            for (std::size_t r = 0; r < rows; ++r) {
                              double sum_d = 0.0, sum_dx = 0.0;
                              for (std::size_t c = 0; c < cols; ++c) {
                                dxhat[c] = d.at(r, c) * gv[c];
                                sum_d += dxhat[c];
                                sum_dx += dxhat[c] * normalized->at(r, c);
                              }
                              const double k = (*inv_std)[r] / n;
                              for (std::size_t c = 0; c < cols; ++c) {
                                dx.at(r, c) += k * (n * dxhat[c] - sum_d - normalized->at(r, c) * sum_dx);
                              }
                            }
                          });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const int ia = a.id();
  return a.graph().record(Tensor::scalar(total), {ia}, [ia](Graph& g, int self) {
    const double d = g.grad_buffer(self)[0];
    for (auto& v : g.grad_buffer(ia).values()) v += d;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols needs at least one tensor");
  const std::size_t rows = parts[0].value().rows();
  std::size_t total = 0;
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    require_same_graph(parts[0], p);
    require_rank2(p.value(), "concat_cols");
    if (p.value().rows() != rows) throw DimensionError("concat_cols row counts differ");
    ids.push_back(p.id());
    widths.push_back(p.value().cols());
    total += p.value().cols();
  }
  Tensor out({rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) out.at(r, offset + c) = v.at(r, c);
    offset += widths[k];
  }
  return parts[0].graph().record(std::move(out), ids, [ids, widths, rows, total](Graph& g, int self) {
    const Tensor& d = g.grad_buffer(self);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (g.requires_grad(ids[k])) {
        Tensor& dp = g.grad_buffer(ids[k]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) dp.at(r, c) += d[r * total + offset + c];
      }
      offset += widths[k];
    }
  });
}

Var tile_rows(Var row, std::size_t n) {
  const Tensor& rv = row.value();
  if (rv.rows() != 1) throw DimensionError("tile_rows expects a single row, got " + shape_string(rv.shape()));
  const std::size_t cols = rv.cols();
  Tensor out({n, cols});
  for (std::size_t r = 0; r < n; ++r)
    std::copy(rv.values().begin(), rv.values().end(), out.row_view(r).begin());
  const int ir = row.id();
  return row.graph().record(std::move(out), {ir}, [ir, n, cols](Graph& g, int self) {
    const Tensor& d = g.grad_buffer(self);
    Tensor& dr = g.grad_buffer(ir);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < cols; ++c) dr[c] += d[r * cols + c];
  });
}

Var bce_with_logits(Var logits, std::span<const double> labels, std::span<const double> weights) {
  const Tensor& z = logits.value();
  const std::size_t m = z.size();
  if (labels.size() != m || weights.size() != m) {
    throw DimensionError("bce_with_logits: " + std::to_string(m) + " logits but " + std::to_string(labels.size()) +
                         " labels and " + std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double softplus = std::max(z[i], 0.0) + std::log1p(std::exp(-std::abs(z[i])));
    total += weights[i] * (softplus - labels[i] * z[i]);
  }
  total /= static_cast<double>(m);
  std::vector<double> y(labels.begin(), labels.end());
  std::vector<double> w(weights.begin(), weights.end());
  const int iz = logits.id();
  return logits.graph().record(Tensor::scalar(total), {iz}, [iz, y, w, m](Graph& g, int self) {
    const double d = g.grad_buffer(self)[0];
    const Tensor& z = g.value(iz);
    Tensor& dz = g.grad_buffer(iz);
    for (std::size_t i = 0; i < m; ++i) {
      const double p = z[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-z[i])) : std::exp(z[i]) / (1.0 + std::exp(z[i]));
      dz[i] += d * w[i] * (p - y[i]) / static_cast<double>(m);
    }
  });
}

AttentionOutput set_attention(Var queries, Var keys, Var values, std::size_t heads, std::size_t query_set,
                              std::size_t key_set) {
  require_same_graph(queries, keys);
  require_same_graph(queries, values);
  const Tensor& q = queries.value();
  const Tensor& k = keys.value();
  const Tensor& v = values.value();
  require_rank2(q, "set_attention");
  require_rank2(k, "set_attention");
  require_rank2(v, "set_attention");
  if (heads == 0 || query_set == 0 || key_set == 0) throw DimensionError("set_attention: zero heads or set size");
  const std::size_t dk = q.cols(), dv = v.cols();
  if (k.cols() != dk) {
    throw DimensionError("set_attention key width " + shape_string(k.shape()) + " differs from query width " +
                         shape_string(q.shape()));
  }
  if (dk % heads != 0 || dv % heads != 0) {
    throw DimensionError("set_attention: widths " + std::to_string(dk) + "/" + std::to_string(dv) +
                         " not divisible by " + std::to_string(heads) + " heads");
  }
  if (q.rows() % query_set != 0 || k.rows() % key_set != 0 || k.rows() != v.rows()) {
    throw DimensionError("set_attention: row counts do not split into sets");
  }
  const std::size_t sets = q.rows() / query_set;
  if (k.rows() / key_set != sets) {
    throw DimensionError("set_attention: " + std::to_string(sets) + " query sets but " +
                         std::to_string(k.rows() / key_set) + " key sets");
  }
  const std::size_t hk = dk / heads, hv = dv / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hk));

  // probs laid out as [set][head][query][key]
  auto probs = std::make_shared<std::vector<double>>(sets * heads * query_set * key_set);
  Tensor out({sets * query_set, dv}, 0.0);
  Tensor averaged({sets * query_set, key_set}, 0.0);
  const double head_share = 1.0 / static_cast<double>(heads);

  for (std::size_t s = 0; s < sets; ++s) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < query_set; ++i) {
        const double* qi = &q.values()[(s * query_set + i) * dk + h * hk];
        double* p = &(*probs)[((s * heads + h) * query_set + i) * key_set];
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < key_set; ++j) {
          const double* kj = &k.values()[(s * key_set + j) * dk + h * hk];
          double dot = 0.0;
          for (std::size_t c = 0; c < hk; ++c) dot += qi[c] * kj[c];
          p[j] = dot * inv_scale;
          if (std::isnan(p[j])) throw NumericError("set_attention: NaN score");
          peak = std::max(peak, p[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < key_set; ++j) {
          p[j] = std::exp(p[j] - peak);
          total += p[j];
        }
        double* o = &out.values()[(s * query_set + i) * dv + h * hv];
        double* avg = &averaged.values()[(s * query_set + i) * key_set];
        for (std::size_t j = 0; j < key_set; ++j) {
          p[j] /= total;
          avg[j] += p[j] * head_share;
          const double* vj = &v.values()[(s * key_set + j) * dv + h * hv];
          for (std::size_t c = 0; c < hv; ++c) o[c] += p[j] * vj[c];
        }
      }
    }
  }

  const int iq = queries.id(), ik = keys.id(), iv = values.id();
  Var result = queries.graph().record(
      std::move(out), {iq, ik, iv},
      [=](Graph& g, int self) {
        const Tensor& d = g.grad_buffer(self);
        const Tensor& qv = g.value(iq);
        const Tensor& kv = g.value(ik);
        const Tensor& vv = g.value(iv);
        const bool need_q = g.requires_grad(iq), need_k = g.requires_grad(ik), need_v = g.requires_grad(iv);
        double* dq = need_q ? g.grad_buffer(iq).values().data() : nullptr;
        double* dkk = need_k ? g.grad_buffer(ik).values().data() : nullptr;
        double* dvv = need_v ? g.grad_buffer(iv).values().data() : nullptr;
        std::vector<double> dp(key_set);
        for (std::size_t s = 0; s < sets; ++s) {
          for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < query_set; ++i) {
              const std::size_t qrow = s * query_set + i;
              const double* p = &(*probs)[((s * heads + h) * query_set + i) * key_set];
              const double* dout = &d.values()[qrow * dv + h * hv];
              double dot = 0.0;
              for (std::size_t j = 0; j < key_set; ++j) {
                const std::size_t krow = s * key_set + j;
                const double* vj = &vv.values()[krow * dv + h * hv];
                double acc = 0.0;
                for (std::size_t c = 0; c < hv; ++c) acc += dout[c] * vj[c];
                dp[j] = acc;
                dot += acc * p[j];
                if (dvv) {
                  double* dvj = dvv + krow * dv + h * hv;
                  for (std::size_t c = 0; c < hv; ++c) dvj[c] += p[j] * dout[c];
                }
              }
              const double* qi = &qv.values()[qrow * dk + h * hk];
              for (std::size_t j = 0; j < key_set; ++j) {
                const double ds = p[j] * (dp[j] - dot) * inv_scale;
                if (ds == 0.0) continue;
                const std::size_t krow = s * key_set + j;
                const double* kj = &kv.values()[krow * dk + h * hk];
                if (dq) {
                  double* dqi = dq + qrow * dk + h * hk;
                  for (std::size_t c = 0; c < hk; ++c) dqi[c] += ds * kj[c];
                }
                if (dkk) {
                  double* dkj = dkk + krow * dk + h * hk;
                  for (std::size_t c = 0; c < hk; ++c) dkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
  return AttentionOutput{result, std::move(averaged)};
}

// ---------------------------------------------------------------------------
// Gradient checking

double finite_diff_check(const ScalarFn& f, std::vector<Tensor> inputs, double step, std::size_t max_coords,
                         std::uint64_t seed) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(g.leaf(t));
    Var out = f(g, leaves);
    g.backward(out);
    for (const Var& l : leaves) analytic.push_back(g.grad(l));
  }
  auto evaluate = [&]() {
    Graph g(false);
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(g.leaf(t, false));
    return f(g, leaves).value()[0];
  };

  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    std::vector<std::size_t> coords(inputs[t].size());
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords > 0 && coords.size() > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords);
    }
    for (std::size_t i : coords) {
      const double saved = inputs[t][i];
      inputs[t][i] = saved + step;
      const double up = evaluate();
      inputs[t][i] = saved - step;
      const double down = evaluate();
      inputs[t][i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

double finite_diff_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, double step) {
  return finite_diff_check([&](Graph& g, std::span<const Var> v) { return f(g, v[0]); }, {x}, step);
}

}  // namespace seizset
