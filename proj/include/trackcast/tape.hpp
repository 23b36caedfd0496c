#pragma once

#include <map>
#include <string>
#include <vector>

#include "trackcast/tensor.hpp"

namespace trackcast {

class ParamStore;

using GradientMap = std::map<std::string, Tensor>;

enum class OpKind {
    // public apply() surface
    matmul,
    add,
    sub,
    mul_elementwise,
    scalar_mul,
    concat_last_axis,
    reduce_sum,
    reduce_mean,
    relu,
    tanh_fn,
    sigmoid_fn,
    exp_fn,
    log_fn,
    square,
    // internal kinds: sources and extension ops with hand-derived adjoints
    leaf,
    constant,
    reshape,
    sqrt_fn,
    dpp_expected_cardinality,
};

const char* op_name(OpKind kind);

// Records every executed primitive in execution order, so operands always
// precede outputs and a replay is just a forward walk. Values are referenced
// by node id; one tape per forward pass, single writer.
class Tape {
public:
    // Named differentiable source. Repeated registration of the same name is
    // memoized so adjoints accumulate on one node.
    int leaf(const std::string& name, Tensor value);

    // Non-differentiable source (inputs, targets, fixed coefficients).
    int constant(Tensor value);

    // Executes one primitive. Shape preconditions are checked per kind;
    // violations throw ShapeError naming the op and the offending shapes.
    // log of a non-positive input and sqrt of a negative input throw
    // DomainError at execution time.
    int apply(OpKind kind, const std::vector<int>& inputs);

    // Shape metadata change, numel preserved; gradient passes through.
    int reshape(int input, std::vector<std::size_t> new_shape);

    const Tensor& value(int id) const;
    std::size_t size() const { return nodes_.size(); }

    // True when every recorded value is finite; the training loop's
    // divergence detector. `bad_node` receives the first offender.
    bool all_finite(int* bad_node = nullptr) const;

    // Reverse accumulation from a scalar loss. Returns one gradient per
    // registered leaf name; leaves the loss does not reach get zeros of the
    // leaf's shape. Non-scalar loss is rejected.
    GradientMap backward(int loss_id) const;

private:
    struct Node {
        OpKind kind;
        std::vector<int> inputs;
        Tensor value;
        std::string name;  // leaf only
    };

    int push(Node n);
    std::vector<Node> nodes_;
    std::map<std::string, int> leaf_ids_;
};

// Thin wrappers so call sites read as expressions.
namespace ops {
int matmul(Tape& t, int a, int b);
int add(Tape& t, int a, int b);
int sub(Tape& t, int a, int b);
int mul(Tape& t, int a, int b);
int scalar_mul(Tape& t, int x, int s);
int concat(Tape& t, const std::vector<int>& xs);
int reduce_sum(Tape& t, int x);
int reduce_mean(Tape& t, int x);
int relu(Tape& t, int x);
int tanh(Tape& t, int x);
int sigmoid(Tape& t, int x);
int exp(Tape& t, int x);
int log(Tape& t, int x);
int square(Tape& t, int x);
int sqrt(Tape& t, int x);

// Convenience composites built from the primitives above.
int add_const(Tape& t, int x, double c);
int scale(Tape& t, int x, double c);
// lo + relu(x-lo) - relu(x-hi): identity inside [lo,hi], flat outside.
int clamp(Tape& t, int x, double lo, double hi);
// a - relu(a-b): the elementwise minimum, gradient follows the active branch.
int min2(Tape& t, int a, int b);

// trace(I - (L+I)^-1) of a K x K kernel via a pivoted solve; equals the sum
// of eig/(1+eig). Differentiable; adjoint is g * ((L+I)^-2)^T.
int dpp_expected_cardinality(Tape& t, int l_kernel);
}  // namespace ops

}  // namespace trackcast
