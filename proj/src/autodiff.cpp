#include "cfm/autodiff.hpp"

#include "cfm/error.hpp"

#include <cmath>
#include <sstream>

namespace cfm::ad {

namespace {

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

Mat sigmoid(const Mat& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Parameter: return "parameter";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::MatMul: return "matmul";
    case Op::Affine: return "affine";
    case Op::Scale: return "scale";
    case Op::Tanh: return "tanh";
    case Op::Silu: return "silu";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Square: return "square";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Detach: return "detach";
  }
  return "?";
}

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  evaluated_ = false;
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Graph::Node& Graph::node(Var v, const char* what) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ShapeError(std::string(what) + ": invalid node handle");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Graph::input(Eigen::Index rows, Eigen::Index cols, std::string name) {
  if (rows <= 0 || cols <= 0) throw ShapeError("input: shape must be positive");
  Node n;
  n.op = Op::Input;
  n.rows = rows;
  n.cols = cols;
  n.depends_on_leaf = true;
  n.name = std::move(name);
  n.value = Mat::Zero(rows, cols);
  Var v = push(std::move(n));
  inputs_.push_back(v);
  return v;
}

Var Graph::parameter(Mat& storage, std::string name) {
  if (storage.size() == 0) throw ShapeError("parameter: empty storage");
  for (const Var& p : parameters_) {
    if (nodes_[p.id].storage == &storage) return p;
  }
  Node n;
  n.op = Op::Parameter;
  n.rows = storage.rows();
  n.cols = storage.cols();
  n.storage = &storage;
  n.depends_on_leaf = true;
  n.name = std::move(name);
  Var v = push(std::move(n));
  parameters_.push_back(v);
  return v;
}

Var Graph::constant(Mat value) {
  if (value.size() == 0) throw ShapeError("constant: empty value");
  Node n;
  n.op = Op::Constant;
  n.rows = value.rows();
  n.cols = value.cols();
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::elementwise(Op op, Var a, Var b) {
  const Node& na = node(a, op_name(op));
  const Node& nb = node(b, op_name(op));
  if (na.rows != nb.rows || na.cols != nb.cols) {
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_str(na.rows, na.cols) +
                     " vs " + shape_str(nb.rows, nb.cols));
  }
  Node n;
  n.op = op; n.a = a.id; n.b = b.id;
  n.rows = na.rows;
  n.cols = na.cols;
  n.depends_on_leaf = na.depends_on_leaf || nb.depends_on_leaf;
  return push(std::move(n));
}

Var Graph::unary(Op op, Var a) {
  const Node& na = node(a, op_name(op));
  Node n;
  n.op = op; n.a = a.id;
  n.rows = na.rows;
  n.cols = na.cols;
  n.depends_on_leaf = na.depends_on_leaf && op != Op::Detach;
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) { return elementwise(Op::Add, a, b); }
Var Graph::sub(Var a, Var b) { return elementwise(Op::Sub, a, b); }
Var Graph::mul(Var a, Var b) { return elementwise(Op::Mul, a, b); }
Var Graph::div(Var a, Var b) { return elementwise(Op::Div, a, b); }

Var Graph::matmul(Var a, Var b) {
  const Node& na = node(a, "matmul");
  const Node& nb = node(b, "matmul");
  if (na.cols != nb.rows) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(na.rows, na.cols) + " * " +
                     shape_str(nb.rows, nb.cols));
  }
  Node n;
  n.op = Op::MatMul; n.a = a.id; n.b = b.id;
  n.rows = na.rows;
  n.cols = nb.cols;
  n.depends_on_leaf = na.depends_on_leaf || nb.depends_on_leaf;
  return push(std::move(n));
}

Var Graph::affine(Var x, Var w, Var b) {
  const Node& nx = node(x, "affine");
  const Node& nw = node(w, "affine");
  const Node& nb = node(b, "affine");
  if (nx.cols != nw.rows) {
    throw ShapeError("affine: x " + shape_str(nx.rows, nx.cols) + " incompatible with w " +
                     shape_str(nw.rows, nw.cols));
  }
  if (nb.rows != 1 || nb.cols != nw.cols) {
    throw ShapeError("affine: bias must be 1x" + std::to_string(nw.cols) + ", got " +
                     shape_str(nb.rows, nb.cols));
  }
  Node n;
  n.op = Op::Affine; n.a = x.id; n.b = w.id; n.c = b.id;
  n.rows = nx.rows;
  n.cols = nw.cols;
  n.depends_on_leaf = nx.depends_on_leaf || nw.depends_on_leaf || nb.depends_on_leaf;
  return push(std::move(n));
}

Var Graph::scale(Var a, double s) {
  Var v = unary(Op::Scale, a);
  nodes_[static_cast<std::size_t>(v.id)].scalar = s;
  return v;
}

Var Graph::tanh(Var a) { return unary(Op::Tanh, a); }
Var Graph::silu(Var a) { return unary(Op::Silu, a); }
Var Graph::sin(Var a) { return unary(Op::Sin, a); }
Var Graph::cos(Var a) { return unary(Op::Cos, a); }
Var Graph::square(Var a) { return unary(Op::Square, a); }
Var Graph::detach(Var a) { return unary(Op::Detach, a); }

Var Graph::sum(Var a) {
  Var v = unary(Op::Sum, a);
  auto& n = nodes_[static_cast<std::size_t>(v.id)];
  n.rows = 1;
  n.cols = 1;
  return v;
}

Var Graph::mean(Var a) {
  Var v = unary(Op::Mean, a);
  auto& n = nodes_[static_cast<std::size_t>(v.id)];
  n.rows = 1;
  n.cols = 1;
  return v;
}

const Mat& Graph::value(Var v) const {
  const Node& n = node(v, "value");
  return n.op == Op::Parameter ? *n.storage : n.value;
}

const Mat& Graph::grad(Var v) const { return node(v, "grad").grad; }

Mat& Graph::parameter_storage(Var v) {
  const Node& n = node(v, "parameter_storage");
  if (n.op != Op::Parameter) throw ShapeError("parameter_storage: node is not a parameter");
  return *n.storage;
}

const std::string& Graph::name(Var v) const { return node(v, "name").name; }
Op Graph::op(Var v) const { return node(v, "op").op; }

void Graph::forward_node(Node& n) {
  auto val = [this](int i) -> const Mat& {
    const Node& p = nodes_[static_cast<std::size_t>(i)];
    return p.op == Op::Parameter ? *p.storage : p.value;
  };
  switch (n.op) {
    case Op::Input:
    case Op::Parameter:
    case Op::Constant:
      break;
    case Op::Add: n.value = val(n.a) + val(n.b); break;
    case Op::Sub: n.value = val(n.a) - val(n.b); break;
    case Op::Mul: n.value = val(n.a).cwiseProduct(val(n.b)); break;
    case Op::Div: n.value = val(n.a).cwiseQuotient(val(n.b)); break;
    case Op::MatMul:
      n.value.resize(n.rows, n.cols);
      n.value.noalias() = val(n.a) * val(n.b);
      break;
    case Op::Affine:
      n.value.resize(n.rows, n.cols);
      n.value.noalias() = val(n.a) * val(n.b);
      n.value.rowwise() += val(n.c).row(0);
      break;
    case Op::Scale: n.value = n.scalar * val(n.a); break;
    case Op::Tanh: n.value = val(n.a).array().tanh().matrix(); break;
    case Op::Silu: {
      const Mat& x = val(n.a);
      n.value = x.cwiseProduct(sigmoid(x));
      break;
    }
    case Op::Sin: n.value = val(n.a).array().sin().matrix(); break;
    case Op::Cos: n.value = val(n.a).array().cos().matrix(); break;
    case Op::Square: n.value = val(n.a).array().square().matrix(); break;
    case Op::Sum: n.value = Mat::Constant(1, 1, val(n.a).sum()); break;
    case Op::Mean: n.value = Mat::Constant(1, 1, val(n.a).mean()); break;
    case Op::Detach: n.value = val(n.a); break;
  }
}

void Graph::evaluate(std::span<const Mat> inputs, bool freeze_detached) {
  if (inputs.size() != inputs_.size()) {
    throw ShapeError("evaluate: expected " + std::to_string(inputs_.size()) + " inputs, got " +
                     std::to_string(inputs.size()));
  }
  if (freeze_detached && !evaluated_) {
    throw Error("evaluate: freezing detached values requires a prior evaluation");
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Node& n = nodes_[static_cast<std::size_t>(inputs_[i].id)];
    if (inputs[i].rows() != n.rows || inputs[i].cols() != n.cols) {
      throw ShapeError("input '" + n.name + "': expected " + shape_str(n.rows, n.cols) + ", got " +
                       shape_str(inputs[i].rows(), inputs[i].cols()));
    }
    if (!inputs[i].allFinite()) throw NonFiniteError("input '" + n.name + "' is not finite");
    n.value = inputs[i];
  }
  for (const Var& p : parameters_) {
    const Node& n = nodes_[static_cast<std::size_t>(p.id)];
    if (n.storage->rows() != n.rows || n.storage->cols() != n.cols) {
      throw ShapeError("parameter '" + n.name + "' changed shape since graph construction");
    }
  }
  for (Node& n : nodes_) {
    if (freeze_detached && n.op == Op::Detach) continue;
    forward_node(n);
  }
  evaluated_ = true;
}

void Graph::backward(Var output) {
  const Node& n = node(output, "backward");
  if (n.rows != 1 || n.cols != 1) {
    throw ShapeError("backward: implicit seed needs a 1x1 output, got " + shape_str(n.rows, n.cols));
  }
  backward(output, Mat::Ones(1, 1));
}

void Graph::backward(Var output, const Mat& seed) {
  if (!evaluated_) throw Error("backward: graph has not been evaluated");
  const Node& out = node(output, "backward");
  if (seed.rows() != out.rows || seed.cols() != out.cols) {
    throw ShapeError("backward: seed " + shape_str(seed.rows(), seed.cols()) +
                     " does not match output " + shape_str(out.rows, out.cols));
  }
  const auto count = static_cast<std::size_t>(output.id) + 1;
  std::vector<char> reached(nodes_.size(), 0);
  for (Node& n : nodes_) n.grad.setZero(n.rows, n.cols);
  reached[count - 1] = 1;
  nodes_[count - 1].grad = seed;

  auto val = [this](int i) -> const Mat& {
    const Node& p = nodes_[static_cast<std::size_t>(i)];
    return p.op == Op::Parameter ? *p.storage : p.value;
  };
  auto flows = [this](int i) { return i >= 0 && nodes_[static_cast<std::size_t>(i)].depends_on_leaf; };

  for (std::size_t k = count; k-- > 0;) {
    if (!reached[k]) continue;
    Node& n = nodes_[k];
    if (!n.depends_on_leaf || n.op == Op::Detach) continue;
    const Mat& g = n.grad;
    auto send = [&](int parent) -> Mat* {
      if (!flows(parent)) return nullptr;
      reached[static_cast<std::size_t>(parent)] = 1;
      return &nodes_[static_cast<std::size_t>(parent)].grad;
    };
    switch (n.op) {
      case Op::Input:
      case Op::Parameter:
      case Op::Constant:
      case Op::Detach:
        break;
      case Op::Add:
        if (Mat* ga = send(n.a)) *ga += g;
        if (Mat* gb = send(n.b)) *gb += g;
        break;
      case Op::Sub:
        if (Mat* ga = send(n.a)) *ga += g;
        if (Mat* gb = send(n.b)) *gb -= g;
        break;
      case Op::Mul:
        if (Mat* ga = send(n.a)) *ga += g.cwiseProduct(val(n.b));
        if (Mat* gb = send(n.b)) *gb += g.cwiseProduct(val(n.a));
        break;
      case Op::Div: {
        const Mat& b = val(n.b);
        if (Mat* ga = send(n.a)) *ga += g.cwiseQuotient(b);
        if (Mat* gb = send(n.b)) {
          *gb -= (g.array() * val(n.a).array() / b.array().square()).matrix();
        }
        break;
      }
      case Op::MatMul:
        if (Mat* ga = send(n.a)) ga->noalias() += g * val(n.b).transpose();
        if (Mat* gb = send(n.b)) gb->noalias() += val(n.a).transpose() * g;
        break;
      case Op::Affine:
        if (Mat* gx = send(n.a)) gx->noalias() += g * val(n.b).transpose();
        if (Mat* gw = send(n.b)) gw->noalias() += val(n.a).transpose() * g;
        if (Mat* gc = send(n.c)) *gc += g.colwise().sum();
        break;
      case Op::Scale:
        if (Mat* ga = send(n.a)) *ga += n.scalar * g;
        break;
      case Op::Tanh:
        if (Mat* ga = send(n.a)) *ga += (g.array() * (1.0 - n.value.array().square())).matrix();
        break;
      case Op::Silu:
        if (Mat* ga = send(n.a)) {
          const Mat& x = val(n.a);
          const Mat s = sigmoid(x);
          *ga += (g.array() * s.array() * (1.0 + x.array() * (1.0 - s.array()))).matrix();
        }
        break;
      case Op::Sin:
        if (Mat* ga = send(n.a)) *ga += (g.array() * val(n.a).array().cos()).matrix();
        break;
      case Op::Cos:
        if (Mat* ga = send(n.a)) *ga -= (g.array() * val(n.a).array().sin()).matrix();
        break;
      case Op::Square:
        if (Mat* ga = send(n.a)) *ga += 2.0 * g.cwiseProduct(val(n.a));
        break;
      case Op::Sum:
        if (Mat* ga = send(n.a)) ga->array() += g(0, 0);
        break;
      case Op::Mean:
        if (Mat* ga = send(n.a)) ga->array() += g(0, 0) / static_cast<double>(ga->size());
        break;
    }
  }
}

std::vector<Mat> Graph::jvp(std::span<const Mat> input_tangents, std::span<const Var> outputs) const {
  if (!evaluated_) throw Error("jvp: graph has not been evaluated");
  if (input_tangents.size() != inputs_.size()) {
    throw ShapeError("jvp: expected " + std::to_string(inputs_.size()) + " tangents, got " +
                     std::to_string(input_tangents.size()));
  }
  std::size_t last = 0;
  for (const Var& o : outputs) {
    node(o, "jvp");
    last = std::max(last, static_cast<std::size_t>(o.id));
  }
  std::vector<Mat> tan(last + 1);
  std::vector<char> has(last + 1, 0);
  for (std::size_t i = 0; i < inputs_.size(); ++i) {
    const auto id = static_cast<std::size_t>(inputs_[i].id);
    if (id > last || input_tangents[i].size() == 0) continue;
    const Node& n = nodes_[id];
    if (input_tangents[i].rows() != n.rows || input_tangents[i].cols() != n.cols) {
      throw ShapeError("jvp: tangent for input '" + n.name + "' has wrong shape");
    }
    tan[id] = input_tangents[i];
    has[id] = 1;
  }
  auto val = [this](int i) -> const Mat& {
    const Node& p = nodes_[static_cast<std::size_t>(i)];
    return p.op == Op::Parameter ? *p.storage : p.value;
  };
  auto on = [&](int i) { return i >= 0 && has[static_cast<std::size_t>(i)]; };
  auto t = [&](int i) -> const Mat& { return tan[static_cast<std::size_t>(i)]; };

  for (std::size_t k = 0; k <= last; ++k) {
    const Node& n = nodes_[k];
    const bool ta = on(n.a), tb = on(n.b), tc = on(n.c);
    if (!(ta || tb || tc) || n.op == Op::Detach) continue;
    Mat out = Mat::Zero(n.rows, n.cols);
    switch (n.op) {
      case Op::Input:
      case Op::Parameter:
      case Op::Constant:
      case Op::Detach:
        break;
      case Op::Add:
        if (ta) out += t(n.a);
        if (tb) out += t(n.b);
        break;
      case Op::Sub:
        if (ta) out += t(n.a);
        if (tb) out -= t(n.b);
        break;
      case Op::Mul:
        if (ta) out += t(n.a).cwiseProduct(val(n.b));
        if (tb) out += val(n.a).cwiseProduct(t(n.b));
        break;
      case Op::Div: {
        const Mat& b = val(n.b);
        if (ta) out += t(n.a).cwiseQuotient(b);
        if (tb) out -= (val(n.a).array() * t(n.b).array() / b.array().square()).matrix();
        break;
      }
      case Op::MatMul:
        if (ta) out.noalias() += t(n.a) * val(n.b);
        if (tb) out.noalias() += val(n.a) * t(n.b);
        break;
      case Op::Affine:
        if (ta) out.noalias() += t(n.a) * val(n.b);
        if (tb) out.noalias() += val(n.a) * t(n.b);
        if (tc) out.rowwise() += t(n.c).row(0);
        break;
      case Op::Scale: out = n.scalar * t(n.a); break;
      case Op::Tanh: out = (t(n.a).array() * (1.0 - n.value.array().square())).matrix(); break;
      case Op::Silu: {
        const Mat& x = val(n.a);
        const Mat s = sigmoid(x);
        out = (t(n.a).array() * s.array() * (1.0 + x.array() * (1.0 - s.array()))).matrix();
        break;
      }
      case Op::Sin: out = (t(n.a).array() * val(n.a).array().cos()).matrix(); break;
      case Op::Cos: out = (-t(n.a).array() * val(n.a).array().sin()).matrix(); break;
      case Op::Square: out = 2.0 * t(n.a).cwiseProduct(val(n.a)); break;
      case Op::Sum: out(0, 0) = t(n.a).sum(); break;
      case Op::Mean: out(0, 0) = t(n.a).mean(); break;
    }
    tan[k] = std::move(out);
    has[k] = 1;
  }

  std::vector<Mat> result;
  result.reserve(outputs.size());
  for (const Var& o : outputs) {
    const auto id = static_cast<std::size_t>(o.id);
    result.push_back(has[id] ? tan[id] : Mat::Zero(nodes_[id].rows, nodes_[id].cols));
  }
  return result;
}

namespace {

double scalar_output(const Graph& g, Var output, const char* what, std::size_t coord) {
  const double f = g.value(output)(0, 0);
  if (!std::isfinite(f)) {
    throw NonFiniteError(std::string(what) + ": non-finite output at coordinate " + std::to_string(coord));
  }
  return f;
}

void check_eps(double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw Error("grad_check: eps must lie in (0, 1e-2]");
}

}  // namespace

GradCheckResult grad_check(Graph& graph, Var output, std::span<const Mat> point, double eps,
                           GradCheckLeaves leaves) {
  check_eps(eps);
  graph.evaluate(point);
  graph.backward(output);

  std::vector<Mat> inputs(point.begin(), point.end());
  GradCheckResult res;
  std::size_t coord = 0;

  auto probe = [&](Mat& slot, const Mat& analytic, auto&& reevaluate) {
    for (Eigen::Index i = 0; i < slot.size(); ++i, ++coord) {
      const double saved = slot.data()[i];
      slot.data()[i] = saved + eps;
      reevaluate();
      const double fp = scalar_output(graph, output, "grad_check", coord);
      slot.data()[i] = saved - eps;
      reevaluate();
      const double fm = scalar_output(graph, output, "grad_check", coord);
      slot.data()[i] = saved;
      const double fd = (fp - fm) / (2.0 * eps);
      const double err = std::abs(analytic.data()[i] - fd) / std::max(1.0, std::abs(fd));
      if (!std::isfinite(analytic.data()[i])) {
        throw NonFiniteError("grad_check: non-finite gradient at coordinate " + std::to_string(coord));
      }
      if (err >= res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_index = coord;
      }
      ++res.checked;
    }
  };

  auto reeval = [&] { graph.evaluate(inputs, /*freeze_detached=*/true); };

  if (leaves != GradCheckLeaves::Parameters) {
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const Mat analytic = graph.grad(graph.inputs()[k]);
      probe(inputs[k], analytic, reeval);
    }
  }
  if (leaves != GradCheckLeaves::Inputs) {
    for (const Var& p : graph.parameters()) {
      const Mat analytic = graph.grad(p);
      probe(graph.parameter_storage(p), analytic, reeval);
    }
  }
  graph.evaluate(point);
  return res;
}

GradCheckResult grad_check_directions(Graph& graph, Var output, std::span<const Mat> point,
                                      std::span<const std::vector<Mat>> directions, double eps) {
  check_eps(eps);
  graph.evaluate(point);
  graph.backward(output);
  const auto& params = graph.parameters();
  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  for (const Var& p : params) analytic.push_back(graph.grad(p));

  GradCheckResult res;
  for (std::size_t d = 0; d < directions.size(); ++d) {
    const auto& dir = directions[d];
    if (dir.size() != params.size()) throw ShapeError("grad_check_directions: direction arity mismatch");
    double ad_dot = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (dir[k].rows() != analytic[k].rows() || dir[k].cols() != analytic[k].cols()) {
        throw ShapeError("grad_check_directions: direction shape mismatch for '" + graph.name(params[k]) + "'");
      }
      ad_dot += analytic[k].cwiseProduct(dir[k]).sum();
    }
    auto shift = [&](double s) {
      for (std::size_t k = 0; k < params.size(); ++k) graph.parameter_storage(params[k]) += s * dir[k];
    };
    std::vector<Mat> saved;
    saved.reserve(params.size());
    for (const Var& p : params) saved.push_back(graph.parameter_storage(p));
    shift(eps);
    graph.evaluate(point, true);
    const double fp = scalar_output(graph, output, "grad_check_directions", d);
    for (std::size_t k = 0; k < params.size(); ++k) graph.parameter_storage(params[k]) = saved[k];
    shift(-eps);
    graph.evaluate(point, true);
    const double fm = scalar_output(graph, output, "grad_check_directions", d);
    for (std::size_t k = 0; k < params.size(); ++k) graph.parameter_storage(params[k]) = saved[k];

    const double fd = (fp - fm) / (2.0 * eps);
    const double err = std::abs(ad_dot - fd) / std::max(1.0, std::abs(fd));
    if (err >= res.max_rel_error) {
      res.max_rel_error = err;
      res.worst_index = d;
    }
    ++res.checked;
  }
  graph.evaluate(point);
  return res;
}

}  // namespace cfm::ad
