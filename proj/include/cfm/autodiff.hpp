#pragma once

// Static computation graphs over dense matrices with reverse-mode and
// forward-mode differentiation.
//
// A Graph is built once (node creation checks shapes) and evaluated many
// times with fresh input values. Parameters are bound to external storage so
// an optimizer can update them in place between evaluations.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cfm {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace ad {

enum class Op : std::uint8_t {
  Input,
  Parameter,
  Constant,
  Add,
  Sub,
  Mul,
  Div,
  MatMul,
  Affine,
  Scale,
  Tanh,
  Silu,
  Sin,
  Cos,
  Square,
  Sum,
  Mean,
  Detach,
};

const char* op_name(Op op);

// Handle to a node inside a Graph.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Leaves.
  Var input(Eigen::Index rows, Eigen::Index cols, std::string name = {});
  // Binds `storage`; it must outlive the graph and keep its shape. Binding
  // the same storage twice returns the existing node.
  Var parameter(Mat& storage, std::string name = {});
  Var constant(Mat value);

  // Elementwise binary ops require equal shapes.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var matmul(Var a, Var b);
  // x * w + 1 * b, with b a single row broadcast over the rows of x.
  Var affine(Var x, Var w, Var b);
  Var scale(Var a, double s);
  Var tanh(Var a);
  Var silu(Var a);
  Var sin(Var a);
  Var cos(Var a);
  Var square(Var a);
  Var sum(Var a);   // 1x1
  Var mean(Var a);  // 1x1
  // Passes the value through; blocks gradients and tangents.
  Var detach(Var a);

  // Forward pass. `inputs` are given in the order input() was called.
  // With `freeze_detached`, Detach nodes keep the value from the previous
  // evaluation, which is what the stop-gradient semantics differentiate.
  void evaluate(std::span<const Mat> inputs, bool freeze_detached = false);
  bool evaluated() const { return evaluated_; }

  // Reverse pass from `output` with the given seed (same shape as output).
  // Gradients of every node are overwritten, not accumulated across calls.
  void backward(Var output, const Mat& seed);
  // Scalar output, seed 1.
  void backward(Var output);

  // Forward-mode directional derivative. Tangents are given per input in
  // input() order (an empty matrix means zero); parameters have zero tangent.
  std::vector<Mat> jvp(std::span<const Mat> input_tangents, std::span<const Var> outputs) const;

  const Mat& value(Var v) const;
  const Mat& grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Var>& inputs() const { return inputs_; }
  const std::vector<Var>& parameters() const { return parameters_; }
  Mat& parameter_storage(Var v);
  const std::string& name(Var v) const;
  Op op(Var v) const;

 private:
  struct Node {
    Op op = Op::Input;
    int a = -1;
    int b = -1;
    int c = -1;
    double scalar = 0.0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Mat value;
    Mat grad;
    Mat* storage = nullptr;
    bool depends_on_leaf = false;  // reachable from an input or parameter
    std::string name;
  };

  Var push(Node node);
  const Node& node(Var v, const char* what) const;
  Var unary(Op op, Var a);
  Var elementwise(Op op, Var a, Var b);
  void forward_node(Node& n);

  std::vector<Node> nodes_;
  std::vector<Var> inputs_;
  std::vector<Var> parameters_;
  bool evaluated_ = false;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  // Coordinate (flattened over the checked leaves) where the max occurred.
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

enum class GradCheckLeaves { Inputs, Parameters, All };

// Central-difference check of the reverse-mode gradient of a scalar output.
// Error per coordinate is |g_ad - g_fd| / max(1, |g_fd|). Detached values are
// held at their value at `point`. Throws NonFiniteError naming the coordinate
// if a perturbed evaluation is not finite.
GradCheckResult grad_check(Graph& graph, Var output, std::span<const Mat> point, double eps,
                           GradCheckLeaves leaves = GradCheckLeaves::All);

// Same check along whole-parameter directions: compares <grad, d> against
// (f(p + eps d) - f(p - eps d)) / (2 eps) for each direction d. Each direction
// holds one matrix per graph parameter, in parameters() order.
GradCheckResult grad_check_directions(Graph& graph, Var output, std::span<const Mat> point,
                                      std::span<const std::vector<Mat>> directions, double eps);

}  // namespace ad
}  // namespace cfm
