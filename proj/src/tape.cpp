#include "trackcast/tape.hpp"

#include <cmath>

#include "trackcast/errors.hpp"
#include "trackcast/linalg.hpp"

namespace trackcast {

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul_elementwise: return "mul_elementwise";
        case OpKind::scalar_mul: return "scalar_mul";
        case OpKind::concat_last_axis: return "concat_last_axis";
        case OpKind::reduce_sum: return "reduce_sum";
        case OpKind::reduce_mean: return "reduce_mean";
        case OpKind::relu: return "relu";
        case OpKind::tanh_fn: return "tanh";
        case OpKind::sigmoid_fn: return "sigmoid";
        case OpKind::exp_fn: return "exp";
        case OpKind::log_fn: return "log";
        case OpKind::square: return "square";
        case OpKind::leaf: return "leaf";
        case OpKind::constant: return "constant";
        case OpKind::reshape: return "reshape";
        case OpKind::sqrt_fn: return "sqrt";
        case OpKind::dpp_expected_cardinality: return "dpp_expected_cardinality";
    }
    return "?";
}

namespace {

void require_arity(OpKind kind, const std::vector<int>& inputs, std::size_t n) {
    if (inputs.size() != n)
        throw ShapeError(std::string(op_name(kind)) + ": expected " + std::to_string(n) +
                         " inputs, got " + std::to_string(inputs.size()));
}

// add/sub/mul allow equal shapes or a 1-element operand against anything.
void require_elementwise(OpKind kind, const Tensor& a, const Tensor& b) {
    if (same_shape(a, b) || a.is_scalar() || b.is_scalar()) return;
    throw ShapeError(std::string(op_name(kind)) + ": shapes " + a.shape_str() + " and " +
                     b.shape_str() + " are incompatible");
}

Tensor elementwise(OpKind kind, const Tensor& a, const Tensor& b) {
    const Tensor& big = a.is_scalar() && !b.is_scalar() ? b : a;
    Tensor out(big.shape);
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a.is_scalar() ? a.data[0] : a.data[i];
        const double y = b.is_scalar() ? b.data[0] : b.data[i];
        switch (kind) {
            case OpKind::add: out.data[i] = x + y; break;
            case OpKind::sub: out.data[i] = x - y; break;
            case OpKind::mul_elementwise: out.data[i] = x * y; break;
            default: break;
        }
    }
    return out;
}

// Sums grad down to the operand's shape when it was broadcast from a scalar.
void accumulate(Tensor& slot, const Tensor& grad, const Tensor& operand_value) {
    if (slot.numel() == 0) slot = Tensor::zeros_like(operand_value);
    if (operand_value.numel() == 1 && grad.numel() > 1) {
        double s = 0.0;
        for (double g : grad.data) s += g;
        slot.data[0] += s;
        return;
    }
    for (std::size_t i = 0; i < grad.data.size(); ++i) slot.data[i] += grad.data[i];
}

}  // namespace

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(const std::string& name, Tensor value) {
    auto it = leaf_ids_.find(name);
    if (it != leaf_ids_.end()) return it->second;
    check_finite(value, "leaf " + name);
    const int id = push({OpKind::leaf, {}, std::move(value), name});
    leaf_ids_[name] = id;
    return id;
}

int Tape::constant(Tensor value) {
    check_finite(value, "constant");
    return push({OpKind::constant, {}, std::move(value), {}});
}

const Tensor& Tape::value(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
        throw Error("tape: node id " + std::to_string(id) + " out of range");
    return nodes_[static_cast<std::size_t>(id)].value;
}

bool Tape::all_finite(int* bad_node) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!nodes_[i].value.all_finite()) {
            if (bad_node) *bad_node = static_cast<int>(i);
            return false;
        }
    }
    return true;
}

int Tape::reshape(int input, std::vector<std::size_t> new_shape) {
    const Tensor& x = value(input);
    Tensor out;
    out.shape = std::move(new_shape);
    out.data = x.data;
    std::size_t n = 1;
    for (std::size_t d : out.shape) n *= d;
    if (n != x.numel())
        throw ShapeError("reshape: " + x.shape_str() + " to " + out.shape_str() +
                         " changes element count");
    return push({OpKind::reshape, {input}, std::move(out), {}});
}

int Tape::apply(OpKind kind, const std::vector<int>& inputs) {
    for (int id : inputs) (void)value(id);  // range check

    switch (kind) {
        case OpKind::matmul: {
            require_arity(kind, inputs, 2);
            const Tensor& a = value(inputs[0]);
            const Tensor& b = value(inputs[1]);
            if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
                throw ShapeError("matmul: shapes " + a.shape_str() + " and " + b.shape_str() +
                                 " are incompatible");
            Tensor out({a.rows(), b.cols()});
            for (std::size_t i = 0; i < a.rows(); ++i)
                for (std::size_t j = 0; j < b.cols(); ++j) {
                    double acc = 0.0;  // fixed left-to-right accumulation
                    for (std::size_t k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
                    out.at(i, j) = acc;
                }
            return push({kind, inputs, std::move(out), {}});
        }
        case OpKind::add:
        case OpKind::sub:
        case OpKind::mul_elementwise: {
            require_arity(kind, inputs, 2);
            const Tensor& a = value(inputs[0]);
            const Tensor& b = value(inputs[1]);
            require_elementwise(kind, a, b);
            return push({kind, inputs, elementwise(kind, a, b), {}});
        }
        case OpKind::scalar_mul: {
            require_arity(kind, inputs, 2);
            const Tensor& x = value(inputs[0]);
            const Tensor& s = value(inputs[1]);
            if (!s.is_scalar())
                throw ShapeError("scalar_mul: second operand must be scalar, got " + s.shape_str());
            Tensor out(x.shape);
            for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = x.data[i] * s.data[0];
            return push({kind, inputs, std::move(out), {}});
        }
        case OpKind::concat_last_axis: {
            if (inputs.empty()) throw ShapeError("concat_last_axis: no inputs");
            const Tensor& first = value(inputs[0]);
            const std::size_t rank = first.rank();
            if (rank == 0) throw ShapeError("concat_last_axis: rank-0 input");
            std::size_t last = 0;
            for (int id : inputs) {
                const Tensor& t = value(id);
                if (t.rank() != rank)
                    throw ShapeError("concat_last_axis: rank mismatch " + first.shape_str() +
                                     " vs " + t.shape_str());
                for (std::size_t d = 0; d + 1 < rank; ++d)
                    if (t.shape[d] != first.shape[d])
                        throw ShapeError("concat_last_axis: leading dims differ, " +
                                         first.shape_str() + " vs " + t.shape_str());
                last += t.shape[rank - 1];
            }
            std::vector<std::size_t> out_shape = first.shape;
            out_shape[rank - 1] = last;
            Tensor out(out_shape);
            std::size_t outer = 1;
            for (std::size_t d = 0; d + 1 < rank; ++d) outer *= first.shape[d];
            for (std::size_t r = 0; r < outer; ++r) {
                std::size_t off = 0;
                for (int id : inputs) {
                    const Tensor& t = value(id);
                    const std::size_t w = t.shape[rank - 1];
                    for (std::size_t c = 0; c < w; ++c)
                        out.data[r * last + off + c] = t.data[r * w + c];
                    off += w;
                }
            }
            return push({kind, inputs, std::move(out), {}});
        }
        case OpKind::reduce_sum:
        case OpKind::reduce_mean: {
            require_arity(kind, inputs, 1);
            const Tensor& x = value(inputs[0]);
            double acc = 0.0;
            for (double v : x.data) acc += v;
            if (kind == OpKind::reduce_mean) acc /= static_cast<double>(x.numel());
            return push({kind, inputs, Tensor::scalar(acc), {}});
        }
        case OpKind::relu:
        case OpKind::tanh_fn:
        case OpKind::sigmoid_fn:
        case OpKind::exp_fn:
        case OpKind::log_fn:
        case OpKind::square:
        case OpKind::sqrt_fn: {
            require_arity(kind, inputs, 1);
            const Tensor& x = value(inputs[0]);
            Tensor out(x.shape);
            for (std::size_t i = 0; i < x.numel(); ++i) {
                const double v = x.data[i];
                switch (kind) {
                    case OpKind::relu: out.data[i] = v > 0.0 ? v : 0.0; break;
                    case OpKind::tanh_fn: out.data[i] = std::tanh(v); break;
                    case OpKind::sigmoid_fn: out.data[i] = 1.0 / (1.0 + std::exp(-v)); break;
                    case OpKind::exp_fn: out.data[i] = std::exp(v); break;
                    case OpKind::log_fn:
                        if (v <= 0.0)
                            throw DomainError("log: non-positive input " + std::to_string(v));
                        out.data[i] = std::log(v);
                        break;
                    case OpKind::square: out.data[i] = v * v; break;
                    case OpKind::sqrt_fn:
                        if (v < 0.0)
                            throw DomainError("sqrt: negative input " + std::to_string(v));
                        out.data[i] = std::sqrt(v);
                        break;
                    default: break;
                }
            }
            return push({kind, inputs, std::move(out), {}});
        }
        case OpKind::dpp_expected_cardinality: {
            require_arity(kind, inputs, 1);
            const Tensor& l = value(inputs[0]);
            if (l.rank() != 2 || l.rows() != l.cols())
                throw ShapeError("dpp_expected_cardinality: kernel must be square, got " +
                                 l.shape_str());
            const std::size_t k = l.rows();
            linalg::Mat a(k, k);
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j) a(i, j) = l.at(i, j) + (i == j ? 1.0 : 0.0);
            const linalg::Mat inv = linalg::lu_inverse(a);
            const double val = static_cast<double>(k) - linalg::trace(inv);
            return push({kind, inputs, Tensor::scalar(val), {}});
        }
        case OpKind::leaf:
        case OpKind::constant:
        case OpKind::reshape:
            throw Error(std::string("apply: ") + op_name(kind) + " is not applied directly");
    }
    throw Error("apply: unknown op kind");
}

GradientMap Tape::backward(int loss_id) const {
    const Tensor& loss = value(loss_id);
    if (!loss.is_scalar())
        throw ShapeError("backward: loss must be scalar, got " + loss.shape_str());

    std::vector<Tensor> adj(nodes_.size());
    adj[static_cast<std::size_t>(loss_id)] = Tensor::scalar(1.0);

    for (int i = loss_id; i >= 0; --i) {
        const Node& node = nodes_[static_cast<std::size_t>(i)];
        const Tensor& g = adj[static_cast<std::size_t>(i)];
        if (g.numel() == 0) continue;  // not reached by the loss

        switch (node.kind) {
            case OpKind::leaf:
            case OpKind::constant:
                break;
            case OpKind::matmul: {
                const Tensor& a = value(node.inputs[0]);
                const Tensor& b = value(node.inputs[1]);
                Tensor da(a.shape), db(b.shape);
                for (std::size_t r = 0; r < a.rows(); ++r)
                    for (std::size_t c = 0; c < a.cols(); ++c) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < b.cols(); ++j) acc += g.at(r, j) * b.at(c, j);
                        da.at(r, c) = acc;
                    }
                for (std::size_t r = 0; r < b.rows(); ++r)
                    for (std::size_t c = 0; c < b.cols(); ++c) {
                        double acc = 0.0;
                        for (std::size_t i2 = 0; i2 < a.rows(); ++i2)
                            acc += a.at(i2, r) * g.at(i2, c);
                        db.at(r, c) = acc;
                    }
                accumulate(adj[node.inputs[0]], da, a);
                accumulate(adj[node.inputs[1]], db, b);
                break;
            }
            case OpKind::add: {
                accumulate(adj[node.inputs[0]], g, value(node.inputs[0]));
                accumulate(adj[node.inputs[1]], g, value(node.inputs[1]));
                break;
            }
            case OpKind::sub: {
                accumulate(adj[node.inputs[0]], g, value(node.inputs[0]));
                Tensor neg(g.shape);
                for (std::size_t j = 0; j < g.numel(); ++j) neg.data[j] = -g.data[j];
                accumulate(adj[node.inputs[1]], neg, value(node.inputs[1]));
                break;
            }
            case OpKind::mul_elementwise: {
                const Tensor& a = value(node.inputs[0]);
                const Tensor& b = value(node.inputs[1]);
                Tensor da(g.shape), db(g.shape);
                for (std::size_t j = 0; j < g.numel(); ++j) {
                    const double av = a.is_scalar() ? a.data[0] : a.data[j];
                    const double bv = b.is_scalar() ? b.data[0] : b.data[j];
                    da.data[j] = g.data[j] * bv;
                    db.data[j] = g.data[j] * av;
                }
                accumulate(adj[node.inputs[0]], da, a);
                accumulate(adj[node.inputs[1]], db, b);
                break;
            }
            case OpKind::scalar_mul: {
                const Tensor& x = value(node.inputs[0]);
                const Tensor& s = value(node.inputs[1]);
                Tensor dx(x.shape);
                double ds = 0.0;
                for (std::size_t j = 0; j < x.numel(); ++j) {
                    dx.data[j] = g.data[j] * s.data[0];
                    ds += g.data[j] * x.data[j];
                }
                accumulate(adj[node.inputs[0]], dx, x);
                accumulate(adj[node.inputs[1]], Tensor::scalar(ds), s);
                break;
            }
            case OpKind::concat_last_axis: {
                const std::size_t rank = node.value.rank();
                const std::size_t last = node.value.shape[rank - 1];
                std::size_t outer = 1;
                for (std::size_t d = 0; d + 1 < rank; ++d) outer *= node.value.shape[d];
                std::size_t off = 0;
                for (int in : node.inputs) {
                    const Tensor& t = value(in);
                    const std::size_t w = t.shape[rank - 1];
                    Tensor part(t.shape);
                    for (std::size_t r = 0; r < outer; ++r)
                        for (std::size_t c = 0; c < w; ++c)
                            part.data[r * w + c] = g.data[r * last + off + c];
                    accumulate(adj[in], part, t);
                    off += w;
                }
                break;
            }
            case OpKind::reduce_sum: {
                const Tensor& x = value(node.inputs[0]);
                Tensor dx(x.shape, g.data[0]);
                accumulate(adj[node.inputs[0]], dx, x);
                break;
            }
            case OpKind::reduce_mean: {
                const Tensor& x = value(node.inputs[0]);
                Tensor dx(x.shape, g.data[0] / static_cast<double>(x.numel()));
                accumulate(adj[node.inputs[0]], dx, x);
                break;
            }
            case OpKind::relu: {
                const Tensor& x = value(node.inputs[0]);
                Tensor dx(x.shape);
                for (std::size_t j = 0; j < x.numel(); ++j)
                    dx.data[j] = x.data[j] > 0.0 ? g.data[j] : 0.0;  // grad(relu)(0) = 0
                accumulate(adj[node.inputs[0]], dx, x);
                break;
            }
            case OpKind::tanh_fn: {
                Tensor dx(node.value.shape);
                for (std::size_t j = 0; j < dx.numel(); ++j) {
                    const double y = node.value.data[j];
                    dx.data[j] = g.data[j] * (1.0 - y * y);
                }
                accumulate(adj[node.inputs[0]], dx, value(node.inputs[0]));
                break;
            }
            case OpKind::sigmoid_fn: {
                Tensor dx(node.value.shape);
                for (std::size_t j = 0; j < dx.numel(); ++j) {
                    const double y = node.value.data[j];
                    dx.data[j] = g.data[j] * y * (1.0 - y);
                }
                accumulate(adj[node.inputs[0]], dx, value(node.inputs[0]));
                break;
            }
            case OpKind::exp_fn: {
                Tensor dx(node.value.shape);
                for (std::size_t j = 0; j < dx.numel(); ++j)
                    dx.data[j] = g.data[j] * node.value.data[j];
                accumulate(adj[node.inputs[0]], dx, value(node.inputs[0]));
                break;
            }
            case OpKind::log_fn: {
                const Tensor& x = value(node.inputs[0]);
                Tensor dx(x.shape);
                for (std::size_t j = 0; j < x.numel(); ++j) dx.data[j] = g.data[j] / x.data[j];
                accumulate(adj[node.inputs[0]], dx, x);
                break;
            }
            case OpKind::square: {
                const Tensor& x = value(node.inputs[0]);
                Tensor dx(x.shape);
                for (std::size_t j = 0; j < x.numel(); ++j)
                    dx.data[j] = g.data[j] * 2.0 * x.data[j];
                accumulate(adj[node.inputs[0]], dx, x);
                break;
            }
            case OpKind::sqrt_fn: {
                const Tensor& x = value(node.inputs[0]);
                Tensor dx(x.shape);
                for (std::size_t j = 0; j < x.numel(); ++j)
                    dx.data[j] = x.data[j] > 0.0 ? g.data[j] / (2.0 * node.value.data[j]) : 0.0;
                accumulate(adj[node.inputs[0]], dx, x);
                break;
            }
            case OpKind::reshape: {
                const Tensor& x = value(node.inputs[0]);
                Tensor dx(x.shape);
                dx.data = g.data;
                accumulate(adj[node.inputs[0]], dx, x);
                break;
            }
            case OpKind::dpp_expected_cardinality: {
                const Tensor& l = value(node.inputs[0]);
                const std::size_t k = l.rows();
                linalg::Mat a(k, k);
                for (std::size_t r = 0; r < k; ++r)
                    for (std::size_t c = 0; c < k; ++c)
                        a(r, c) = l.at(r, c) + (r == c ? 1.0 : 0.0);
                const linalg::Mat inv = linalg::lu_inverse(a);
                const linalg::Mat inv2 = linalg::mul(inv, inv);
                Tensor dl(l.shape);
                for (std::size_t r = 0; r < k; ++r)
                    for (std::size_t c = 0; c < k; ++c)
                        dl.at(r, c) = g.data[0] * inv2(c, r);
                accumulate(adj[node.inputs[0]], dl, l);
                break;
            }
        }
    }

    GradientMap grads;
    for (const auto& [name, id] : leaf_ids_) {
        const Tensor& g = adj[static_cast<std::size_t>(id)];
        grads[name] = g.numel() ? g : Tensor::zeros_like(nodes_[static_cast<std::size_t>(id)].value);
    }
    return grads;
}

namespace ops {

int matmul(Tape& t, int a, int b) { return t.apply(OpKind::matmul, {a, b}); }
int add(Tape& t, int a, int b) { return t.apply(OpKind::add, {a, b}); }
int sub(Tape& t, int a, int b) { return t.apply(OpKind::sub, {a, b}); }
int mul(Tape& t, int a, int b) { return t.apply(OpKind::mul_elementwise, {a, b}); }
int scalar_mul(Tape& t, int x, int s) { return t.apply(OpKind::scalar_mul, {x, s}); }
int concat(Tape& t, const std::vector<int>& xs) { return t.apply(OpKind::concat_last_axis, xs); }
int reduce_sum(Tape& t, int x) { return t.apply(OpKind::reduce_sum, {x}); }
int reduce_mean(Tape& t, int x) { return t.apply(OpKind::reduce_mean, {x}); }
int relu(Tape& t, int x) { return t.apply(OpKind::relu, {x}); }
int tanh(Tape& t, int x) { return t.apply(OpKind::tanh_fn, {x}); }
int sigmoid(Tape& t, int x) { return t.apply(OpKind::sigmoid_fn, {x}); }
int exp(Tape& t, int x) { return t.apply(OpKind::exp_fn, {x}); }
int log(Tape& t, int x) { return t.apply(OpKind::log_fn, {x}); }
int square(Tape& t, int x) { return t.apply(OpKind::square, {x}); }
int sqrt(Tape& t, int x) { return t.apply(OpKind::sqrt_fn, {x}); }

int add_const(Tape& t, int x, double c) {
    return add(t, x, t.constant(Tensor::scalar(c)));
}

int scale(Tape& t, int x, double c) {
    return scalar_mul(t, x, t.constant(Tensor::scalar(c)));
}

int clamp(Tape& t, int x, double lo, double hi) {
    const int above_lo = relu(t, add_const(t, x, -lo));
    const int above_hi = relu(t, add_const(t, x, -hi));
    return add_const(t, sub(t, above_lo, above_hi), lo);
}

int min2(Tape& t, int a, int b) { return sub(t, a, relu(t, sub(t, a, b))); }

int dpp_expected_cardinality(Tape& t, int l_kernel) {
    return t.apply(OpKind::dpp_expected_cardinality, {l_kernel});
}

}  // namespace ops

}  // namespace trackcast
