#include "attrbench/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "attrbench/errors.hpp"

namespace attrbench::numerics {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

std::string shapes_of(const char* op, const Tensor& a, const Tensor& b) {
  return std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
         shape_string(b.shape());
}

// C (m x n) = A (m x k) * B (k x n); optional transposes read A/B as their transposes.
void gemm(const Tensor& a, bool ta, const Tensor& b, bool tb, Tensor& c) {
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t n = tb ? b.rows() : b.cols();
  const std::size_t lda = a.cols();
  const std::size_t ldb = b.cols();
  auto ad = a.data();
  auto bd = b.data();
  auto cd = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = cd.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? ad[p * lda + i] : ad[i * lda + p];
      if (av == 0.0) continue;
      if (!tb) {
        const double* brow = bd.data() + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * bd[j * ldb + p];
      }
    }
  }
}

double log_sum_exp(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  return mx + std::log(s);
}

void softmax_inplace(std::span<double> v, std::size_t stride, std::size_t count) {
  double mx = v[0];
  for (std::size_t i = 1; i < count; ++i) mx = std::max(mx, v[i * stride]);
  double s = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    double& e = v[i * stride];
    e = std::exp(e - mx);
    s += e;
  }
  for (std::size_t i = 0; i < count; ++i) v[i * stride] /= s;
}

void accumulate(Tensor& into, const Tensor& delta) {
  if (into.size() == 0) {
    into = delta;
    return;
  }
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += delta[i];
}

}  // namespace

const char* op_name(OpKind op) noexcept {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Add: return "add";
    case OpKind::Scale: return "scale";
    case OpKind::Relu: return "relu";
    case OpKind::Softmax: return "softmax";
    case OpKind::EmbeddingLookup: return "embedding_lookup";
    case OpKind::Mean: return "mean";
    case OpKind::CrossEntropy: return "cross_entropy";
    case OpKind::Select: return "select";
  }
  return "?";
}

Var Tape::push(Node node) {
  if (!node.value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op_name(node.op));
  }
  for (std::size_t in : node.inputs) node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::input(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
  return nodes_[v.id];
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = requires_grad ? OpKind::Leaf : OpKind::Constant;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& x = input(a).value;
  const Tensor& y = input(b).value;
  require(y.rank() == 2, shapes_of("matmul", x, y));
  Node n;
  n.op = OpKind::MatMul;
  n.inputs = {a.id, b.id};
  if (x.rank() == 1) {
    require(x.size() == y.rows(), shapes_of("matmul", x, y));
    Tensor out({y.cols()});
    for (std::size_t p = 0; p < x.size(); ++p) {
      auto brow = y.row(p);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += x[p] * brow[j];
    }
    n.value = std::move(out);
  } else {
    require(x.rank() == 2 && x.cols() == y.rows(), shapes_of("matmul", x, y));
    Tensor out({x.rows(), y.cols()});
    gemm(x, false, y, false, out);
    n.value = std::move(out);
  }
  return push(std::move(n));
}

Var Tape::transpose(Var a) {
  const Tensor& x = input(a).value;
  require(x.rank() == 2, "transpose: expected a matrix, got " + shape_string(x.shape()));
  Tensor out({x.cols(), x.rows()});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out.at(j, i) = x.at(i, j);
  Node n;
  n.op = OpKind::Transpose;
  n.inputs = {a.id};
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  const Tensor& x = input(a).value;
  const Tensor& y = input(b).value;
  Tensor out = x;
  if (x.same_shape(y)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  } else {
    require(x.rank() == 2 && y.rank() == 1 && y.size() == x.cols(), shapes_of("add", x, y));
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto row = out.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += y[c];
    }
  }
  Node n;
  n.op = OpKind::Add;
  n.inputs = {a.id, b.id};
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::scale(Var a, double factor) {
  Tensor out = input(a).value;
  for (double& v : out.values()) v *= factor;
  Node n;
  n.op = OpKind::Scale;
  n.inputs = {a.id};
  n.factor = factor;
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  Tensor out = input(a).value;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  Node n;
  n.op = OpKind::Relu;
  n.inputs = {a.id};
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::softmax(Var a, std::size_t axis) {
  const Tensor& x = input(a).value;
  require(x.size() > 0, "softmax: empty input");
  Tensor out = x;
  if (x.rank() == 1) {
    require(axis == 0, "softmax: axis " + std::to_string(axis) + " out of range for a vector");
    softmax_inplace(out.data(), 1, out.size());
  } else {
    require(x.rank() == 2 && axis < 2, "softmax: axis " + std::to_string(axis) + " out of range for " +
                                           shape_string(x.shape()));
    if (axis == 1) {
      for (std::size_t r = 0; r < x.rows(); ++r) softmax_inplace(out.row(r), 1, x.cols());
    } else {
      for (std::size_t c = 0; c < x.cols(); ++c)
        softmax_inplace(out.data().subspan(c), x.cols(), x.rows());
    }
  }
  Node n;
  n.op = OpKind::Softmax;
  n.inputs = {a.id};
  n.axis = axis;
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::embedding_lookup(Var table, std::vector<std::size_t> ids) {
  const Tensor& t = input(table).value;
  require(t.rank() == 2, "embedding_lookup: table must be a matrix, got " + shape_string(t.shape()));
  require(!ids.empty(), "embedding_lookup: empty id list");
  Tensor out({ids.size(), t.cols()});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= t.rows()) {
      throw DimensionError("embedding_lookup: id " + std::to_string(ids[i]) + " outside table of shape " +
                           shape_string(t.shape()));
    }
    std::ranges::copy(t.row(ids[i]), out.row(i).begin());
  }
  Node n;
  n.op = OpKind::EmbeddingLookup;
  n.inputs = {table.id};
  n.ids = std::move(ids);
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::mean(Var a, std::size_t axis) {
  const Tensor& x = input(a).value;
  require(x.size() > 0, "mean: empty input");
  Tensor out;
  if (x.rank() == 1) {
    require(axis == 0, "mean: axis out of range for a vector");
    out = Tensor::scalar(std::accumulate(x.values().begin(), x.values().end(), 0.0) / double(x.size()));
  } else {
    require(x.rank() == 2 && axis < 2, "mean: axis out of range for " + shape_string(x.shape()));
    if (axis == 0) {
      out = Tensor({x.cols()});
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out[c] += x.at(r, c);
      for (double& v : out.values()) v /= double(x.rows());
    } else {
      out = Tensor({x.rows()});
      for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        out[r] = std::accumulate(row.begin(), row.end(), 0.0) / double(x.cols());
      }
    }
  }
  Node n;
  n.op = OpKind::Mean;
  n.inputs = {a.id};
  n.axis = axis;
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::cross_entropy(Var logits, std::size_t target) {
  const Tensor& z = input(logits).value;
  require(z.rank() == 1 && z.size() > 0, "cross_entropy: logits must be a non-empty vector, got " +
                                             shape_string(z.shape()));
  require(target < z.size(), "cross_entropy: target " + std::to_string(target) + " out of range for " +
                                 shape_string(z.shape()));
  Node n;
  n.op = OpKind::CrossEntropy;
  n.inputs = {logits.id};
  n.index = target;
  n.value = Tensor::scalar(log_sum_exp(z.data()) - z[target]);
  return push(std::move(n));
}

Var Tape::select(Var a, std::size_t index) {
  const Tensor& x = input(a).value;
  require(x.rank() == 1 && index < x.size(), "select: index " + std::to_string(index) + " out of range for " +
                                                 shape_string(x.shape()));
  Node n;
  n.op = OpKind::Select;
  n.inputs = {a.id};
  n.index = index;
  n.value = Tensor::scalar(x[index]);
  return push(std::move(n));
}

Gradients grad(const Tape& tape, Var output, const BackwardPolicy& policy) {
  if (output.id >= tape.size()) throw ContractError("output variable does not belong to the tape");
  if (tape.value(output).size() != 1) {
    throw ContractError("grad requires a scalar output, got shape " + shape_string(tape.value(output).shape()));
  }
  if (policy.relu_rule == ReluRule::DeepLiftRescale) {
    if (policy.baseline_activations == nullptr) {
      throw PolicyError("DeepLiftRescale requires baseline activations");
    }
    if (policy.baseline_activations->size() < output.id + 1) {
      throw PolicyError("baseline tape does not match the evaluated graph");
    }
  }

  const auto nodes = tape.nodes();
  std::vector<Tensor> adj(nodes.size());
  adj[output.id] = Tensor(tape.value(output).shape(), 1.0);

  for (std::size_t id = output.id + 1; id-- > 0;) {
    const auto& node = nodes[id];
    if (adj[id].size() == 0 || node.inputs.empty()) continue;
    const Tensor& g = adj[id];
    auto wants = [&](std::size_t k) { return nodes[node.inputs[k]].requires_grad; };
    auto in = [&](std::size_t k) -> const Tensor& { return nodes[node.inputs[k]].value; };
    auto push_to = [&](std::size_t k, const Tensor& delta) { accumulate(adj[node.inputs[k]], delta); };

    switch (node.op) {
      case OpKind::Leaf:
      case OpKind::Constant:
        break;
      case OpKind::MatMul: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        if (a.rank() == 1) {
          if (wants(0)) {
            Tensor da({a.size()});
            for (std::size_t p = 0; p < a.size(); ++p) {
              auto brow = b.row(p);
              double s = 0.0;
              for (std::size_t j = 0; j < g.size(); ++j) s += brow[j] * g[j];
              da[p] = s;
            }
            push_to(0, da);
          }
          if (wants(1)) {
            Tensor db(b.shape());
            for (std::size_t p = 0; p < a.size(); ++p)
              for (std::size_t j = 0; j < g.size(); ++j) db.at(p, j) = a[p] * g[j];
            push_to(1, db);
          }
        } else {
          if (wants(0)) {
            Tensor da(a.shape());
            gemm(g, false, b, true, da);
            push_to(0, da);
          }
          if (wants(1)) {
            Tensor db(b.shape());
            gemm(a, true, g, false, db);
            push_to(1, db);
          }
        }
        break;
      }
      case OpKind::Transpose: {
        if (!wants(0)) break;
        Tensor d({g.cols(), g.rows()});
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) d.at(j, i) = g.at(i, j);
        push_to(0, d);
        break;
      }
      case OpKind::Add: {
        if (wants(0)) push_to(0, g);
        if (wants(1)) {
          if (in(1).same_shape(g)) {
            push_to(1, g);
          } else {
            Tensor d({g.cols()});
            for (std::size_t r = 0; r < g.rows(); ++r)
              for (std::size_t c = 0; c < g.cols(); ++c) d[c] += g.at(r, c);
            push_to(1, d);
          }
        }
        break;
      }
      case OpKind::Scale: {
        if (!wants(0)) break;
        Tensor d = g;
        for (double& v : d.values()) v *= node.factor;
        push_to(0, d);
        break;
      }
      case OpKind::Relu: {
        if (!wants(0)) break;
        const Tensor& x = in(0);
        Tensor d = g;
        switch (policy.relu_rule) {
          case ReluRule::Standard:
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] > 0.0 ? d[i] : 0.0;
            break;
          case ReluRule::GuidedClamp:
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = (x[i] > 0.0 && d[i] > 0.0) ? d[i] : 0.0;
            break;
          case ReluRule::DeepLiftRescale: {
            const Tensor& x0 = policy.baseline_activations->node(node.inputs[0]).value;
            if (!x0.same_shape(x)) throw PolicyError("baseline activation shape mismatch at relu node");
            for (std::size_t i = 0; i < d.size(); ++i) {
              const double dx = x[i] - x0[i];
              const double m = std::abs(dx) > 1e-12
                                   ? (std::max(x[i], 0.0) - std::max(x0[i], 0.0)) / dx
                                   : (x[i] > 0.0 ? 1.0 : 0.0);
              d[i] *= m;
            }
            break;
          }
        }
        push_to(0, d);
        break;
      }
      case OpKind::Softmax: {
        if (!wants(0)) break;
        const Tensor& y = node.value;
        Tensor d(y.shape());
        if (y.rank() == 1 || node.axis == 1) {
          const std::size_t rows = y.rank() == 1 ? 1 : y.rows();
          const std::size_t cols = y.rank() == 1 ? y.size() : y.cols();
          for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
            for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] = y[r * cols + c] * (g[r * cols + c] - dot);
          }
        } else {
          for (std::size_t c = 0; c < y.cols(); ++c) {
            double dot = 0.0;
            for (std::size_t r = 0; r < y.rows(); ++r) dot += g.at(r, c) * y.at(r, c);
            for (std::size_t r = 0; r < y.rows(); ++r) d.at(r, c) = y.at(r, c) * (g.at(r, c) - dot);
          }
        }
        push_to(0, d);
        break;
      }
      case OpKind::EmbeddingLookup: {
        if (!wants(0)) break;
        Tensor d(in(0).shape());
        for (std::size_t i = 0; i < node.ids.size(); ++i) {
          auto src = g.row(i);
          auto dst = d.row(node.ids[i]);
          for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
        push_to(0, d);
        break;
      }
      case OpKind::Mean: {
        if (!wants(0)) break;
        const Tensor& x = in(0);
        Tensor d(x.shape());
        if (x.rank() == 1) {
          for (double& v : d.values()) v = g[0] / double(x.size());
        } else if (node.axis == 0) {
          for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) d.at(r, c) = g[c] / double(x.rows());
        } else {
          for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) d.at(r, c) = g[r] / double(x.cols());
        }
        push_to(0, d);
        break;
      }
      case OpKind::CrossEntropy: {
        if (!wants(0)) break;
        Tensor p = in(0);
        softmax_inplace(p.data(), 1, p.size());
        p[node.index] -= 1.0;
        for (double& v : p.values()) v *= g[0];
        push_to(0, p);
        break;
      }
      case OpKind::Select: {
        if (!wants(0)) break;
        Tensor d(in(0).shape());
        d[node.index] = g[0];
        push_to(0, d);
        break;
      }
    }
  }

  for (std::size_t id = 0; id < nodes.size(); ++id) {
    if (nodes[id].op == OpKind::Leaf && adj[id].size() == 0) adj[id] = Tensor(nodes[id].value.shape());
    if (!adj[id].all_finite()) throw NumericError(std::string("non-finite gradient at ") + op_name(nodes[id].op));
  }
  return Gradients(std::move(adj));
}

double finite_difference_check(const GraphBuilder& builder, const std::vector<Tensor>& point,
                               const FiniteDifferenceOptions& options) {
  if (!(options.epsilon > 0.0)) throw ArgumentError("finite difference step must be positive");

  auto evaluate = [&](const std::vector<Tensor>& at) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(at.size());
    for (const auto& t : at) leaves.push_back(tape.leaf(t));
    return tape.value(builder(tape, leaves)).item();
  };

  Tape tape;
  std::vector<Var> leaves;
  for (const auto& t : point) leaves.push_back(tape.leaf(t));
  const Var out = builder(tape, leaves);
  const Gradients analytic = grad(tape, out);

  std::mt19937_64 rng(options.seed);
  std::vector<Tensor> probe = point;
  double worst = 0.0;
  for (std::size_t l = 0; l < point.size(); ++l) {
    std::vector<std::size_t> coords(point[l].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coordinates_per_leaf > 0 && coords.size() > options.max_coordinates_per_leaf) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coordinates_per_leaf);
    }
    const Tensor& a = analytic.wrt(leaves[l]);
    for (std::size_t c : coords) {
      const double x = point[l][c];
      probe[l][c] = x + options.epsilon;
      const double up = evaluate(probe);
      probe[l][c] = x - options.epsilon;
      const double down = evaluate(probe);
      probe[l][c] = x;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double denom = std::max({std::abs(a[c]), std::abs(numeric), options.abs_floor});
      worst = std::max(worst, std::abs(a[c] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace attrbench::numerics
