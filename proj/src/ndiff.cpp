#include "cecr/ndiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cecr/kernels.hpp"

namespace cecr {

namespace {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a) {
  throw ShapeError(std::string(op) + ": bad shape " + shape_str(a.shape));
}

[[noreturn]] void shape_fail2(const char* op, const Tensor& a,
                              const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_str(a.shape) + " and " + shape_str(b.shape));
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  t.shape = std::move(shape);
  t.data.assign(shape_size(t.shape), 0.0);
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.shape = {1};
  t.data = {v};
  return t;
}

Tensor Tensor::vector(std::vector<double> v) {
  Tensor t;
  t.shape = {v.size()};
  t.data = std::move(v);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> v) {
  if (v.size() != rows * cols) throw ShapeError("matrix: data/extent mismatch");
  Tensor t;
  t.shape = {rows, cols};
  t.data = std::move(v);
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows: tensor is not rank 2");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols: tensor is not rank 2");
  return shape[1];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor is not scalar");
  return data[0];
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(),
                     [](double v) { return std::isfinite(v); });
}

Parameter::Parameter(std::string name, Tensor value)
    : name(std::move(name)), value(std::move(value)) {
  grad = Tensor::zeros(this->value.shape);
}

void Parameter::zero_grad() { grad.fill(0.0); }

Graph::NodeId Graph::emplace(Tensor value, std::string label,
                             std::vector<NodeId> parents,
                             std::function<void(Graph&, NodeId)> back) {
  assert(value.all_finite());
  Node node;
  node.value = std::move(value);
  node.label = std::move(label);
  node.parents = std::move(parents);
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::input(Tensor value, std::string label) {
  return emplace(std::move(value), std::move(label), {}, nullptr);
}

Graph::NodeId Graph::param(Parameter& p) {
  NodeId id = emplace(p.value, "param:" + p.name, {}, nullptr);
  nodes_[id].bound = &p;
  return id;
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2) shape_fail("matmul", ta);
  const std::size_t m = ta.shape[0], k = ta.shape[1];
  Tensor out;
  if (tb.rank() == 1) {
    if (tb.shape[0] != k) shape_fail2("matmul", ta, tb);
    out = Tensor::zeros({m});
    kernels::matvec(ta.data.data(), tb.data.data(), out.data.data(), m, k);
  } else if (tb.rank() == 2) {
    if (tb.shape[0] != k) shape_fail2("matmul", ta, tb);
    const std::size_t n = tb.shape[1];
    out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t kk = 0; kk < k; ++kk)
        kernels::axpy(ta.data[i * k + kk], tb.data.data() + kk * n,
                      out.data.data() + i * n, n);
  } else {
    shape_fail("matmul", tb);
  }
  return emplace(std::move(out), "matmul", {a, b}, [](Graph& g, NodeId id) {
    const Node& node = g.nodes_[id];
    const NodeId a = node.parents[0], b = node.parents[1];
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    const Tensor& gy = node.grad;
    Tensor& ga = g.grad_mut(a);
    Tensor& gb = g.grad_mut(b);
    const std::size_t m = ta.shape[0], k = ta.shape[1];
    if (tb.rank() == 1) {
      // ga += gy outer x ; gb += A^T gy
      kernels::ger(1.0, gy.data.data(), tb.data.data(), ga.data.data(), m, k);
      for (std::size_t i = 0; i < m; ++i)
        kernels::axpy(gy.data[i], ta.data.data() + i * k, gb.data.data(), k);
    } else {
      const std::size_t n = tb.shape[1];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
          ga.data[i * k + kk] += kernels::dot(gy.data.data() + i * n,
                                              tb.data.data() + kk * n, n);
          kernels::axpy(ta.data[i * k + kk], gy.data.data() + i * n,
                        gb.data.data() + kk * n, n);
        }
    }
  });
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) shape_fail2("add", ta, tb);
  Tensor out = Tensor::zeros(ta.shape);
  kernels::add(ta.data.data(), tb.data.data(), out.data.data(), ta.size());
  return emplace(std::move(out), "add", {a, b}, [](Graph& g, NodeId id) {
    const Node& node = g.nodes_[id];
    const Tensor& gy = node.grad;
    kernels::axpy(1.0, gy.data.data(), g.grad_mut(node.parents[0]).data.data(),
                  gy.size());
    kernels::axpy(1.0, gy.data.data(), g.grad_mut(node.parents[1]).data.data(),
                  gy.size());
  });
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) shape_fail2("mul", ta, tb);
  Tensor out = Tensor::zeros(ta.shape);
  kernels::mul(ta.data.data(), tb.data.data(), out.data.data(), ta.size());
  return emplace(std::move(out), "mul", {a, b}, [](Graph& g, NodeId id) {
    const Node& node = g.nodes_[id];
    const NodeId a = node.parents[0], b = node.parents[1];
    const Tensor& gy = node.grad;
    const std::size_t n = gy.size();
    Tensor tmp = Tensor::zeros(gy.shape);
    kernels::mul(gy.data.data(), g.value(b).data.data(), tmp.data.data(), n);
    kernels::axpy(1.0, tmp.data.data(), g.grad_mut(a).data.data(), n);
    kernels::mul(gy.data.data(), g.value(a).data.data(), tmp.data.data(), n);
    kernels::axpy(1.0, tmp.data.data(), g.grad_mut(b).data.data(), n);
  });
}

Graph::NodeId Graph::scale(NodeId a, double c) {
  Tensor out = value(a);
  kernels::scale(c, out.data.data(), out.size());
  return emplace(std::move(out), "scale", {a}, [c](Graph& g, NodeId id) {
    const Node& node = g.nodes_[id];
    kernels::axpy(c, node.grad.data.data(),
                  g.grad_mut(node.parents[0]).data.data(), node.grad.size());
  });
}

Graph::NodeId Graph::scale_by(NodeId a, NodeId s) {
  const Tensor& ts = value(s);
  if (ts.size() != 1) shape_fail("scale_by", ts);
  Tensor out = value(a);
  kernels::scale(ts.item(), out.data.data(), out.size());
  return emplace(std::move(out), "scale_by", {a, s}, [](Graph& g, NodeId id) {
    const Node& node = g.nodes_[id];
    const NodeId a = node.parents[0], s = node.parents[1];
    const Tensor& gy = node.grad;
    kernels::axpy(g.value(s).item(), gy.data.data(),
                  g.grad_mut(a).data.data(), gy.size());
    g.grad_mut(s).data[0] +=
        kernels::dot(gy.data.data(), g.value(a).data.data(), gy.size());
  });
}

Graph::NodeId Graph::concat(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::size_t total = 0;
  for (NodeId p : parts) {
    if (value(p).rank() != 1) shape_fail("concat", value(p));
    total += value(p).size();
  }
  Tensor out = Tensor::zeros({total});
  std::size_t off = 0;
  for (NodeId p : parts) {
    const Tensor& tp = value(p);
    std::copy(tp.data.begin(), tp.data.end(), out.data.begin() + off);
    off += tp.size();
  }
  return emplace(std::move(out), "concat", parts, [](Graph& g, NodeId id) {
    const Node& node = g.nodes_[id];
    std::size_t off = 0;
    for (NodeId p : node.parents) {
      Tensor& gp = g.grad_mut(p);
      kernels::axpy(1.0, node.grad.data.data() + off, gp.data.data(),
                    gp.size());
      off += gp.size();
    }
  });
}

Graph::NodeId Graph::slice(NodeId a, std::size_t offset, std::size_t len) {
  // Flat-offset slice; works on any rank and yields a rank-1 view copy.
  const Tensor& ta = value(a);
  if (offset + len > ta.size()) shape_fail("slice", ta);
  Tensor out = Tensor::zeros({len});
  std::copy(ta.data.begin() + offset, ta.data.begin() + offset + len,
            out.data.begin());
  return emplace(std::move(out), "slice", {a},
                 [offset](Graph& g, NodeId id) {
                   const Node& node = g.nodes_[id];
                   kernels::axpy(
                       1.0, node.grad.data.data(),
                       g.grad_mut(node.parents[0]).data.data() + offset,
                       node.grad.size());
                 });
}

Graph::NodeId Graph::row_softmax(NodeId a) {
  const Tensor& ta = value(a);
  const std::size_t cols = ta.rank() == 1 ? ta.size() : ta.shape.back();
  const std::size_t rows = ta.size() / cols;
  if (cols == 0) shape_fail("row_softmax", ta);
  Tensor out = ta;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double denom = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      denom += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= denom;
  }
  return emplace(std::move(out), "row_softmax", {a},
                 [rows, cols](Graph& g, NodeId id) {
                   const Node& node = g.nodes_[id];
                   Tensor& ga = g.grad_mut(node.parents[0]);
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double* y = node.value.data.data() + r * cols;
                     const double* gy = node.grad.data.data() + r * cols;
                     const double inner = kernels::dot(gy, y, cols);
                     double* out = ga.data.data() + r * cols;
                     for (std::size_t c = 0; c < cols; ++c)
                       out[c] += (gy[c] - inner) * y[c];
                   }
                 });
}

Graph::NodeId Graph::sigmoid(NodeId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return emplace(std::move(out), "sigmoid", {a}, [](Graph& g, NodeId id) {
    const Node& node = g.nodes_[id];
    Tensor& ga = g.grad_mut(node.parents[0]);
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      const double y = node.value.data[i];
      ga.data[i] += node.grad.data[i] * y * (1.0 - y);
    }
  });
}

Graph::NodeId Graph::tanh(NodeId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::tanh(v);
  return emplace(std::move(out), "tanh", {a}, [](Graph& g, NodeId id) {
    const Node& node = g.nodes_[id];
    Tensor& ga = g.grad_mut(node.parents[0]);
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      const double y = node.value.data[i];
      ga.data[i] += node.grad.data[i] * (1.0 - y * y);
    }
  });
}

Graph::NodeId Graph::sum(NodeId a) {
  const Tensor& ta = value(a);
  const double total =
      std::accumulate(ta.data.begin(), ta.data.end(), 0.0);
  return emplace(Tensor::scalar(total), "sum", {a}, [](Graph& g, NodeId id) {
    const Node& node = g.nodes_[id];
    Tensor& ga = g.grad_mut(node.parents[0]);
    const double gy = node.grad.data[0];
    for (double& v : ga.data) v += gy;
  });
}

Graph::NodeId Graph::mean(NodeId a) {
  const Tensor& ta = value(a);
  if (ta.size() == 0) shape_fail("mean", ta);
  const double total = std::accumulate(ta.data.begin(), ta.data.end(), 0.0);
  const double inv = 1.0 / static_cast<double>(ta.size());
  return emplace(Tensor::scalar(total * inv), "mean", {a},
                 [inv](Graph& g, NodeId id) {
                   const Node& node = g.nodes_[id];
                   Tensor& ga = g.grad_mut(node.parents[0]);
                   const double gy = node.grad.data[0] * inv;
                   for (double& v : ga.data) v += gy;
                 });
}

Graph::NodeId Graph::pick(NodeId a, std::size_t index) {
  const Tensor& ta = value(a);
  if (ta.rank() != 1 || index >= ta.size()) shape_fail("pick", ta);
  return emplace(Tensor::scalar(ta.data[index]), "pick", {a},
                 [index](Graph& g, NodeId id) {
                   const Node& node = g.nodes_[id];
                   g.grad_mut(node.parents[0]).data[index] +=
                       node.grad.data[0];
                 });
}

Graph::NodeId Graph::log(NodeId a) {
  constexpr double kFloor = 1e-12;
  Tensor out = value(a);
  for (double& v : out.data) v = std::log(std::max(v, kFloor));
  return emplace(std::move(out), "log", {a}, [kFloor](Graph& g, NodeId id) {
    const Node& node = g.nodes_[id];
    Tensor& ga = g.grad_mut(node.parents[0]);
    const Tensor& ta = g.value(node.parents[0]);
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      const double x = std::max(ta.data[i], kFloor);
      ga.data[i] += node.grad.data[i] / x;
    }
  });
}

Graph::NodeId Graph::gather(NodeId table, const std::vector<int>& ids) {
  const Tensor& tt = value(table);
  if (tt.rank() != 2) shape_fail("gather", tt);
  const std::size_t dim = tt.shape[1];
  Tensor out = Tensor::zeros({ids.size(), dim});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tt.shape[0])
      throw ShapeError("gather: row id out of range");
    std::copy(tt.data.begin() + ids[i] * dim,
              tt.data.begin() + (ids[i] + 1) * dim,
              out.data.begin() + i * dim);
  }
  return emplace(std::move(out), "gather", {table},
                 [ids, dim](Graph& g, NodeId id) {
                   const Node& node = g.nodes_[id];
                   Tensor& gt = g.grad_mut(node.parents[0]);
                   for (std::size_t i = 0; i < ids.size(); ++i)
                     kernels::axpy(1.0, node.grad.data.data() + i * dim,
                                   gt.data.data() + ids[i] * dim, dim);
                 });
}

Graph::NodeId Graph::dropout(NodeId a, double p, bool train, RngStream& rng) {
  if (p < 0.0 || p >= 1.0) throw ShapeError("dropout: p must be in [0,1)");
  if (!train || p == 0.0) return a;  // identity at eval time
  const Tensor& ta = value(a);
  std::vector<double> mask(ta.size());
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask) m = rng.bernoulli(p) ? 0.0 : keep_scale;
  Tensor out = Tensor::zeros(ta.shape);
  kernels::mul(ta.data.data(), mask.data(), out.data.data(), ta.size());
  return emplace(std::move(out), "dropout", {a},
                 [mask = std::move(mask)](Graph& g, NodeId id) {
                   const Node& node = g.nodes_[id];
                   Tensor& ga = g.grad_mut(node.parents[0]);
                   for (std::size_t i = 0; i < mask.size(); ++i)
                     ga.data[i] += node.grad.data[i] * mask[i];
                 });
}

Graph::NodeId Graph::lstm_cell(NodeId w_ih, NodeId w_hh, NodeId b, NodeId x,
                               NodeId h_prev, NodeId c_prev) {
  const Tensor& wi = value(w_ih);
  const Tensor& wh = value(w_hh);
  const Tensor& bias = value(b);
  const Tensor& xv = value(x);
  const Tensor& hv = value(h_prev);
  const Tensor& cv = value(c_prev);
  const std::size_t H = hv.size();
  if (wi.rank() != 2 || wi.rows() != 4 * H || wi.cols() != xv.size())
    shape_fail2("lstm_cell", wi, xv);
  if (wh.rank() != 2 || wh.rows() != 4 * H || wh.cols() != H)
    shape_fail2("lstm_cell", wh, hv);
  if (bias.size() != 4 * H || cv.size() != H) shape_fail("lstm_cell", bias);

  // z = W_ih x + W_hh h + b, then activated gates i, f, g, o.
  std::vector<double> gates(4 * H);
  std::vector<double> zh(4 * H);
  kernels::matvec(wi.data.data(), xv.data.data(), gates.data(), 4 * H,
                  xv.size());
  kernels::matvec(wh.data.data(), hv.data.data(), zh.data(), 4 * H, H);
  kernels::add(gates.data(), zh.data(), gates.data(), 4 * H);
  kernels::add(gates.data(), bias.data.data(), gates.data(), 4 * H);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (std::size_t j = 0; j < H; ++j) {
    gates[j] = sig(gates[j]);
    gates[H + j] = sig(gates[H + j]);
    gates[2 * H + j] = std::tanh(gates[2 * H + j]);
    gates[3 * H + j] = sig(gates[3 * H + j]);
  }

  Tensor out = Tensor::zeros({2 * H});
  std::vector<double> tc(H);  // tanh of the new cell state
  for (std::size_t j = 0; j < H; ++j) {
    const double c_next = gates[H + j] * cv.data[j] + gates[j] * gates[2 * H + j];
    out.data[H + j] = c_next;
    tc[j] = std::tanh(c_next);
    out.data[j] = gates[3 * H + j] * tc[j];
  }

  return emplace(
      std::move(out), "lstm_cell", {w_ih, w_hh, b, x, h_prev, c_prev},
      [gates = std::move(gates), tc = std::move(tc)](Graph& g, NodeId id) {
        const Node& node = g.nodes_[id];
        const std::size_t H = tc.size();
        const Tensor& wi = g.value(node.parents[0]);
        const Tensor& xv = g.value(node.parents[3]);
        const Tensor& hv = g.value(node.parents[4]);
        const Tensor& cv = g.value(node.parents[5]);
        const Tensor& wh = g.value(node.parents[1]);
        Tensor& gwi = g.grad_mut(node.parents[0]);
        Tensor& gwh = g.grad_mut(node.parents[1]);
        Tensor& gb = g.grad_mut(node.parents[2]);
        Tensor& gx = g.grad_mut(node.parents[3]);
        Tensor& gh = g.grad_mut(node.parents[4]);
        Tensor& gc = g.grad_mut(node.parents[5]);

        const double* dout = node.grad.data.data();  // [dh; dc]
        std::vector<double> dz(4 * H);
        for (std::size_t j = 0; j < H; ++j) {
          const double gi = gates[j], gf = gates[H + j], gg = gates[2 * H + j],
                       go = gates[3 * H + j];
          const double dh = dout[j];
          const double dc = dout[H + j] + dh * go * (1.0 - tc[j] * tc[j]);
          dz[j] = dc * gg * gi * (1.0 - gi);
          dz[H + j] = dc * cv.data[j] * gf * (1.0 - gf);
          dz[2 * H + j] = dc * gi * (1.0 - gg * gg);
          dz[3 * H + j] = dh * tc[j] * go * (1.0 - go);
          gc.data[j] += dc * gf;
        }
        kernels::ger(1.0, dz.data(), xv.data.data(), gwi.data.data(), 4 * H,
                     xv.size());
        kernels::ger(1.0, dz.data(), hv.data.data(), gwh.data.data(), 4 * H, H);
        kernels::axpy(1.0, dz.data(), gb.data.data(), 4 * H);
        // dx += W_ih^T dz, dh += W_hh^T dz
        for (std::size_t r = 0; r < 4 * H; ++r) {
          kernels::axpy(dz[r], wi.data.data() + r * xv.size(), gx.data.data(),
                        xv.size());
          kernels::axpy(dz[r], wh.data.data() + r * H, gh.data.data(), H);
        }
      });
}

void Graph::backward(NodeId loss) {
  if (value(loss).size() != 1)
    throw ShapeError("backward: loss must be scalar");
  for (Node& node : nodes_) node.grad = Tensor::zeros(node.value.shape);
  nodes_[loss].grad.data[0] = 1.0;
  for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id)
    if (nodes_[id].back) nodes_[id].back(*this, id);
  for (Node& node : nodes_)
    if (node.bound)
      kernels::axpy(1.0, node.grad.data.data(), node.bound->grad.data.data(),
                    node.grad.size());
}

std::string Graph::dump() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    os << "#" << i << " " << nodes_[i].label << " "
       << shape_str(nodes_[i].value.shape) << "\n";
  }
  return os.str();
}

double grad_check(const std::function<double()>& f,
                  const std::function<void()>& compute_grads,
                  const std::vector<Parameter*>& params, double h) {
  for (Parameter* p : params) p->zero_grad();
  compute_grads();
  double max_rel = 0.0;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value.data[i];
      p->value.data[i] = orig + h;
      const double fp = f();
      p->value.data[i] = orig - h;
      const double fm = f();
      p->value.data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = p->grad.data[i];
      const double rel = std::abs(analytic - numeric) /
                         std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace cecr
