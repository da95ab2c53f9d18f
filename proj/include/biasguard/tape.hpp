#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "biasguard/tensor.hpp"

namespace biasguard {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = static_cast<NodeId>(-1);

enum class Op : std::uint8_t {
    Input,       // differentiable leaf
    Constant,    // non-differentiable leaf
    MatMul,
    Transpose,
    Add,         // same shape
    AddRow,      // matrix + broadcast row
    Sub,
    Mul,         // elementwise
    Div,         // elementwise
    RowScale,    // matrix rows scaled by a column of per-row factors
    ScalarMul,   // scalar node times tensor node
    Affine,      // p0 * x + p1, constants
    Relu,
    Heaviside,   // 1 where x > 0 else 0; gradient defined as zero
    Softplus,
    Sigmoid,
    Exp,
    Log,
    Sqrt,
    SumAll,      // -> scalar
    MeanAll,     // -> scalar
    ColSum,      // n x k -> 1 x k
    RowSum,      // n x k -> n x 1
    ConcatRows,
    ConcatCols,
    SliceRows,   // i0 = first row, i1 = row count
    SliceCols,
    PadRows,     // adjoint of SliceRows: embed into i0 rows starting at i1
    PadCols,
    Broadcast,   // scalar -> arbitrary shape
    PairQuadform,  // sum_{i != j} (a_i - b_j)^T M (a_i - b_j)
    SpdInverse,    // inverse of a symmetric positive definite matrix
};

const char* op_name(Op op);

// Append-only record of primitive operations. Every node's value is computed
// eagerly on insertion; replay() recomputes all values in insertion order and
// must reproduce them bit-identically. grad() appends adjoint nodes built from
// the same primitive set, so gradients are themselves differentiable
// (needed by the gradient-penalty term).
class Tape {
public:
    struct Node {
        Op op;
        std::array<NodeId, 3> in{kNoNode, kNoNode, kNoNode};
        double p0 = 0.0, p1 = 0.0;
        std::size_t i0 = 0, i1 = 0;
        Tensor value;
    };

    NodeId input(Tensor t);
    NodeId constant(Tensor t);

    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId x);
    NodeId add(NodeId a, NodeId b);
    NodeId add_row(NodeId m, NodeId r);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId row_scale(NodeId m, NodeId s);
    NodeId scalar_mul(NodeId s, NodeId x);
    NodeId affine(NodeId x, double scale, double shift);
    NodeId relu(NodeId x);
    NodeId heaviside(NodeId x);
    NodeId softplus(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId exp(NodeId x);
    NodeId log(NodeId x);
    NodeId sqrt(NodeId x);
    NodeId sum(NodeId x);
    NodeId mean(NodeId x);
    NodeId colsum(NodeId x);
    NodeId rowsum(NodeId x);
    NodeId concat_rows(NodeId a, NodeId b);
    NodeId concat_cols(NodeId a, NodeId b);
    NodeId slice_rows(NodeId x, std::size_t first, std::size_t count);
    NodeId slice_cols(NodeId x, std::size_t first, std::size_t count);
    NodeId broadcast(NodeId scalar, std::vector<std::size_t> shape);
    NodeId pair_quadform(NodeId a, NodeId b, NodeId m);
    NodeId spd_inverse(NodeId x);

    // max(x, c) built from existing primitives
    NodeId clamp_min(NodeId x, double c) { return affine(relu(affine(x, 1.0, -c)), 1.0, c); }

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    double scalar_value(NodeId id) const;
    std::size_t size() const { return nodes_.size(); }
    const Node& node(NodeId id) const { return nodes_[id]; }

    // Replace the tensor stored at an Input/Constant leaf (same shape) without
    // touching downstream values; call replay() afterwards.
    void set_leaf(NodeId id, Tensor t);

    // Recompute every non-leaf value in insertion order.
    void replay();

    // Reverse-mode differentiation of a scalar node. Returns one adjoint node
    // per requested leaf or intermediate; missing paths yield zero constants.
    std::vector<NodeId> grad(NodeId loss, std::span<const NodeId> wrt);

private:
    NodeId push(Node n);
    void eval(Node& n) const;
    NodeId pad_rows(NodeId g, std::size_t total_rows, std::size_t first);
    NodeId pad_cols(NodeId g, std::size_t total_cols, std::size_t first);
    void backprop_into_inputs(NodeId id, NodeId adjoint, std::vector<NodeId>& adj);
    void accumulate(std::vector<NodeId>& adj, NodeId target, NodeId contribution);

    std::vector<Node> nodes_;
};

struct GradientResult {
    double loss = 0.0;
    std::vector<Tensor> gradients;
};

// Evaluates the scalar selected by loss_id together with its gradients with
// respect to the given leaves.
GradientResult evaluate_with_gradients(Tape& tape, NodeId loss_id, std::span<const NodeId> wrt);

}  // namespace biasguard
