#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "attrbench/tensor.hpp"

namespace attrbench::numerics {

enum class OpKind {
  Leaf,
  Constant,
  MatMul,
  Transpose,
  Add,
  Scale,
  Relu,
  Softmax,
  EmbeddingLookup,
  Mean,
  CrossEntropy,
  Select,
};

const char* op_name(OpKind op) noexcept;

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Append-only record of a forward evaluation. Nodes are stored in creation
/// order, so every node's inputs precede it and the graph is acyclic.
///
/// Every op checks its result for NaN/Inf and throws NumericError instead of
/// letting non-finite values flow downstream.
class Tape {
 public:
  struct Node {
    OpKind op = OpKind::Leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool requires_grad = false;
    double factor = 1.0;        // Scale
    std::size_t axis = 0;       // Softmax, Mean
    std::size_t index = 0;      // Select, CrossEntropy target
    std::vector<std::size_t> ids;  // EmbeddingLookup
  };

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// 2-D x 2-D, or 1-D (k) x 2-D (k x n) -> 1-D (n).
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  /// Same shapes, or a 2-D lhs plus a 1-D row vector broadcast over rows.
  Var add(Var a, Var b);
  Var scale(Var a, double factor);
  Var relu(Var a);
  /// Axis 0 or 1 for matrices; axis 0 for vectors.
  Var softmax(Var a, std::size_t axis);
  Var embedding_lookup(Var table, std::vector<std::size_t> ids);
  Var mean(Var a, std::size_t axis);
  /// Scalar -log softmax(logits)[target] of a 1-D logits vector.
  Var cross_entropy(Var logits, std::size_t target);
  /// Scalar element `index` of a 1-D vector.
  Var select(Var a, std::size_t index);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::span<const Node> nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  Var push(Node node);
  const Node& input(Var v) const;

  std::vector<Node> nodes_;
};

enum class ReluRule { Standard, GuidedClamp, DeepLiftRescale };

/// How relu nodes route gradients during backward. DeepLiftRescale needs a
/// reference tape recorded by the same graph builder on the baseline input.
struct BackwardPolicy {
  ReluRule relu_rule = ReluRule::Standard;
  const Tape* baseline_activations = nullptr;
};

/// Adjoints for every node that requires a gradient; empty tensors elsewhere.
class Gradients {
 public:
  explicit Gradients(std::vector<Tensor> adjoints) : adjoints_(std::move(adjoints)) {}
  const Tensor& wrt(Var v) const { return adjoints_.at(v.id); }

 private:
  std::vector<Tensor> adjoints_;
};

/// Reverse sweep from a scalar output. Leaves that require a gradient but do
/// not reach `output` get zero adjoints.
Gradients grad(const Tape& tape, Var output, const BackwardPolicy& policy = {});

/// Builds a scalar graph from one leaf per entry of `point`.
using GraphBuilder = std::function<Var(Tape&, std::span<const Var>)>;

struct FiniteDifferenceOptions {
  double epsilon = 1e-5;
  /// Denominator floor of the per-coordinate relative error
  /// |analytic - numeric| / max(|analytic|, |numeric|, abs_floor).
  double abs_floor = 1e-6;
  /// Checks at most this many randomly chosen coordinates per leaf; 0 = all.
  std::size_t max_coordinates_per_leaf = 0;
  std::uint64_t seed = 0;
};

/// Central differences against the Standard reverse-mode gradient.
/// Returns the largest relative error over the checked coordinates.
double finite_difference_check(const GraphBuilder& builder, const std::vector<Tensor>& point,
                               const FiniteDifferenceOptions& options = {});

}  // namespace attrbench::numerics
