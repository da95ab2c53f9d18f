#include "biasguard/tape.hpp"

#include <cmath>

#include "biasguard/errors.hpp"
#include "biasguard/kernels.hpp"

namespace biasguard {

const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "Input";
        case Op::Constant: return "Constant";
        case Op::MatMul: return "MatMul";
        case Op::Transpose: return "Transpose";
        case Op::Add: return "Add";
        case Op::AddRow: return "AddRow";
        case Op::Sub: return "Sub";
        case Op::Mul: return "Mul";
        case Op::Div: return "Div";
        case Op::RowScale: return "RowScale";
        case Op::ScalarMul: return "ScalarMul";
        case Op::Affine: return "Affine";
        case Op::Relu: return "Relu";
        case Op::Heaviside: return "Heaviside";
        case Op::Softplus: return "Softplus";
        case Op::Sigmoid: return "Sigmoid";
        case Op::Exp: return "Exp";
        case Op::Log: return "Log";
        case Op::Sqrt: return "Sqrt";
        case Op::SumAll: return "SumAll";
        case Op::MeanAll: return "MeanAll";
        case Op::ColSum: return "ColSum";
        case Op::RowSum: return "RowSum";
        case Op::ConcatRows: return "ConcatRows";
        case Op::ConcatCols: return "ConcatCols";
        case Op::SliceRows: return "SliceRows";
        case Op::SliceCols: return "SliceCols";
        case Op::PadRows: return "PadRows";
        case Op::PadCols: return "PadCols";
        case Op::Broadcast: return "Broadcast";
        case Op::PairQuadform: return "PairQuadform";
        case Op::SpdInverse: return "SpdInverse";
    }
    return "?";
}

namespace {

double stable_softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// Inverse of a symmetric positive definite matrix via Cholesky.
Tensor spd_inverse_impl(const Tensor& a) {
    const std::size_t n = a.rows();
    Tensor l({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = a(i, j);
            for (std::size_t t = 0; t < j; ++t) acc -= l(i, t) * l(j, t);
            if (i == j) {
                if (acc <= 0.0)
                    throw NumericalFailure("SpdInverse: matrix is not positive definite");
                l(i, i) = std::sqrt(acc);
            } else {
                l(i, j) = acc / l(j, j);
            }
        }
    }
    // linv = L^-1 (lower triangular)
    Tensor linv({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        linv(i, i) = 1.0 / l(i, i);
        for (std::size_t j = 0; j < i; ++j) {
            double acc = 0.0;
            for (std::size_t t = j; t < i; ++t) acc += l(i, t) * linv(t, j);
            linv(i, j) = -acc / l(i, i);
        }
    }
    // inv = L^-T L^-1, symmetrized exactly
    Tensor inv({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = 0.0;
            for (std::size_t t = i; t < n; ++t) acc += linv(t, i) * linv(t, j);
            inv(i, j) = acc;
            inv(j, i) = acc;
        }
    }
    return inv;
}

}  // namespace

NodeId Tape::push(Node n) {
    eval(n);
    if (!n.value.all_finite())
        throw NumericalFailure(std::string("non-finite value produced by primitive ") +
                               op_name(n.op));
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

double Tape::scalar_value(NodeId id) const {
    const Tensor& t = nodes_[id].value;
    if (!t.is_scalar()) throw ContractViolation("scalar_value: node is not a scalar");
    return t[0];
}

void Tape::set_leaf(NodeId id, Tensor t) {
    Node& n = nodes_[id];
    if (n.op != Op::Input && n.op != Op::Constant)
        throw ContractViolation("set_leaf: node is not a leaf");
    if (n.value.shape() != t.shape())
        throw ContractViolation("set_leaf: shape mismatch");
    n.value = std::move(t);
}

void Tape::replay() {
    for (auto& n : nodes_) {
        if (n.op == Op::Input || n.op == Op::Constant) continue;
        eval(n);
    }
}

NodeId Tape::input(Tensor t) {
    Node n;
    n.op = Op::Input;
    n.value = std::move(t);
    return push(std::move(n));
}

NodeId Tape::constant(Tensor t) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(t);
    return push(std::move(n));
}

namespace {
Tape::Node make(Op op, NodeId a = kNoNode, NodeId b = kNoNode, NodeId c = kNoNode) {
    Tape::Node n;
    n.op = op;
    n.in = {a, b, c};
    return n;
}
}  // namespace

NodeId Tape::matmul(NodeId a, NodeId b) { return push(make(Op::MatMul, a, b)); }
NodeId Tape::transpose(NodeId x) { return push(make(Op::Transpose, x)); }
NodeId Tape::add(NodeId a, NodeId b) { return push(make(Op::Add, a, b)); }
NodeId Tape::add_row(NodeId m, NodeId r) { return push(make(Op::AddRow, m, r)); }
NodeId Tape::sub(NodeId a, NodeId b) { return push(make(Op::Sub, a, b)); }
NodeId Tape::mul(NodeId a, NodeId b) { return push(make(Op::Mul, a, b)); }
NodeId Tape::div(NodeId a, NodeId b) { return push(make(Op::Div, a, b)); }
NodeId Tape::row_scale(NodeId m, NodeId s) { return push(make(Op::RowScale, m, s)); }
NodeId Tape::scalar_mul(NodeId s, NodeId x) { return push(make(Op::ScalarMul, s, x)); }

NodeId Tape::affine(NodeId x, double scale, double shift) {
    Node n = make(Op::Affine, x);
    n.p0 = scale;
    n.p1 = shift;
    return push(std::move(n));
}

NodeId Tape::relu(NodeId x) { return push(make(Op::Relu, x)); }
NodeId Tape::heaviside(NodeId x) { return push(make(Op::Heaviside, x)); }
NodeId Tape::softplus(NodeId x) { return push(make(Op::Softplus, x)); }
NodeId Tape::sigmoid(NodeId x) { return push(make(Op::Sigmoid, x)); }
NodeId Tape::exp(NodeId x) { return push(make(Op::Exp, x)); }
NodeId Tape::log(NodeId x) { return push(make(Op::Log, x)); }
NodeId Tape::sqrt(NodeId x) { return push(make(Op::Sqrt, x)); }
NodeId Tape::sum(NodeId x) { return push(make(Op::SumAll, x)); }
NodeId Tape::mean(NodeId x) { return push(make(Op::MeanAll, x)); }
NodeId Tape::colsum(NodeId x) { return push(make(Op::ColSum, x)); }
NodeId Tape::rowsum(NodeId x) { return push(make(Op::RowSum, x)); }
NodeId Tape::concat_rows(NodeId a, NodeId b) { return push(make(Op::ConcatRows, a, b)); }
NodeId Tape::concat_cols(NodeId a, NodeId b) { return push(make(Op::ConcatCols, a, b)); }

NodeId Tape::slice_rows(NodeId x, std::size_t first, std::size_t count) {
    Node n = make(Op::SliceRows, x);
    n.i0 = first;
    n.i1 = count;
    return push(std::move(n));
}

NodeId Tape::slice_cols(NodeId x, std::size_t first, std::size_t count) {
    Node n = make(Op::SliceCols, x);
    n.i0 = first;
    n.i1 = count;
    return push(std::move(n));
}

NodeId Tape::pad_rows(NodeId g, std::size_t total_rows, std::size_t first) {
    Node n = make(Op::PadRows, g);
    n.i0 = total_rows;
    n.i1 = first;
    return push(std::move(n));
}

NodeId Tape::pad_cols(NodeId g, std::size_t total_cols, std::size_t first) {
    Node n = make(Op::PadCols, g);
    n.i0 = total_cols;
    n.i1 = first;
    return push(std::move(n));
}

NodeId Tape::broadcast(NodeId scalar, std::vector<std::size_t> shape) {
    Node n = make(Op::Broadcast, scalar);
    n.i0 = shape.size() >= 1 ? shape[0] : 0;
    n.i1 = shape.size() >= 2 ? shape[1] : 0;  // 0 marks rank 1
    return push(std::move(n));
}

NodeId Tape::pair_quadform(NodeId a, NodeId b, NodeId m) {
    return push(make(Op::PairQuadform, a, b, m));
}

NodeId Tape::spd_inverse(NodeId x) { return push(make(Op::SpdInverse, x)); }

void Tape::eval(Node& n) const {
    auto val = [&](int slot) -> const Tensor& { return nodes_[n.in[slot]].value; };
    auto shape_fail = [&](const char* msg) -> void {
        throw ContractViolation(std::string(op_name(n.op)) + ": " + msg);
    };

    switch (n.op) {
        case Op::Input:
        case Op::Constant:
            return;

        case Op::MatMul: {
            const Tensor& a = val(0);
            const Tensor& b = val(1);
            if (a.cols() != b.rows()) shape_fail("inner dimensions do not match");
            Tensor out({a.rows(), b.cols()});
            kernels::matmul(a.data().data(), b.data().data(), out.data().data(),
                            a.rows(), a.cols(), b.cols());
            n.value = std::move(out);
            return;
        }
        case Op::Transpose: {
            const Tensor& x = val(0);
            Tensor out({x.cols(), x.rows()});
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < x.cols(); ++j) out(j, i) = x(i, j);
            n.value = std::move(out);
            return;
        }
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div: {
            const Tensor& a = val(0);
            const Tensor& b = val(1);
            if (!a.same_shape(b)) shape_fail("operand shapes differ");
            Tensor out(a.shape());
            const std::size_t count = a.numel();
            switch (n.op) {
                case Op::Add:
                    kernels::zip_binary(a.data().data(), b.data().data(), out.data().data(),
                                        count, [](double x, double y) { return x + y; });
                    break;
                case Op::Sub:
                    kernels::zip_binary(a.data().data(), b.data().data(), out.data().data(),
                                        count, [](double x, double y) { return x - y; });
                    break;
                case Op::Mul:
                    kernels::zip_binary(a.data().data(), b.data().data(), out.data().data(),
                                        count, [](double x, double y) { return x * y; });
                    break;
                default:
                    kernels::zip_binary(a.data().data(), b.data().data(), out.data().data(),
                                        count, [](double x, double y) { return x / y; });
                    break;
            }
            n.value = std::move(out);
            return;
        }
        case Op::AddRow: {
            const Tensor& m = val(0);
            const Tensor& r = val(1);
            if (r.numel() != m.cols()) shape_fail("row length does not match matrix columns");
            Tensor out(m.shape());
            for (std::size_t i = 0; i < m.rows(); ++i)
                for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) + r[j];
            n.value = std::move(out);
            return;
        }
        case Op::RowScale: {
            const Tensor& m = val(0);
            const Tensor& s = val(1);
            if (s.numel() != m.rows()) shape_fail("scale length does not match matrix rows");
            Tensor out(m.shape());
            for (std::size_t i = 0; i < m.rows(); ++i)
                for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) * s[i];
            n.value = std::move(out);
            return;
        }
        case Op::ScalarMul: {
            const Tensor& s = val(0);
            const Tensor& x = val(1);
            if (!s.is_scalar()) shape_fail("first operand must be a scalar");
            const double f = s[0];
            Tensor out(x.shape());
            kernels::map_unary(x.data().data(), out.data().data(), x.numel(),
                               [f](double v) { return f * v; });
            n.value = std::move(out);
            return;
        }
        case Op::Affine: {
            const Tensor& x = val(0);
            Tensor out(x.shape());
            const double a = n.p0, b = n.p1;
            kernels::map_unary(x.data().data(), out.data().data(), x.numel(),
                               [a, b](double v) { return a * v + b; });
            n.value = std::move(out);
            return;
        }
        case Op::Relu:
        case Op::Heaviside:
        case Op::Softplus:
        case Op::Sigmoid:
        case Op::Exp:
        case Op::Log:
        case Op::Sqrt: {
            const Tensor& x = val(0);
            Tensor out(x.shape());
            double (*f)(double) = nullptr;
            switch (n.op) {
                case Op::Relu: f = [](double v) { return v > 0.0 ? v : 0.0; }; break;
                case Op::Heaviside: f = [](double v) { return v > 0.0 ? 1.0 : 0.0; }; break;
                case Op::Softplus: f = [](double v) { return stable_softplus(v); }; break;
                case Op::Sigmoid: f = [](double v) { return stable_sigmoid(v); }; break;
                case Op::Exp: f = [](double v) { return std::exp(v); }; break;
                case Op::Log: f = [](double v) { return std::log(v); }; break;
                default: f = [](double v) { return std::sqrt(v); }; break;
            }
            kernels::map_unary(x.data().data(), out.data().data(), x.numel(), f);
            n.value = std::move(out);
            return;
        }
        case Op::SumAll: {
            const Tensor& x = val(0);
            n.value = Tensor::scalar(kernels::sum_all(x.data().data(), x.numel()));
            return;
        }
        case Op::MeanAll: {
            const Tensor& x = val(0);
            n.value = Tensor::scalar(kernels::sum_all(x.data().data(), x.numel()) /
                                     static_cast<double>(x.numel()));
            return;
        }
        case Op::ColSum: {
            const Tensor& x = val(0);
            Tensor out({1, x.cols()});
            kernels::colsum(x.data().data(), out.data().data(), x.rows(), x.cols());
            n.value = std::move(out);
            return;
        }
        case Op::RowSum: {
            const Tensor& x = val(0);
            Tensor out({x.rows(), 1});
            kernels::rowsum(x.data().data(), out.data().data(), x.rows(), x.cols());
            n.value = std::move(out);
            return;
        }
        case Op::ConcatRows: {
            const Tensor& a = val(0);
            const Tensor& b = val(1);
            if (a.cols() != b.cols()) shape_fail("column counts differ");
            Tensor out({a.rows() + b.rows(), a.cols()});
            std::copy(a.data().begin(), a.data().end(), out.data().begin());
            std::copy(b.data().begin(), b.data().end(), out.data().begin() + a.numel());
            n.value = std::move(out);
            return;
        }
        case Op::ConcatCols: {
            const Tensor& a = val(0);
            const Tensor& b = val(1);
            if (a.rows() != b.rows()) shape_fail("row counts differ");
            Tensor out({a.rows(), a.cols() + b.cols()});
            for (std::size_t i = 0; i < a.rows(); ++i) {
                for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
                for (std::size_t j = 0; j < b.cols(); ++j) out(i, a.cols() + j) = b(i, j);
            }
            n.value = std::move(out);
            return;
        }
        case Op::SliceRows: {
            const Tensor& x = val(0);
            if (n.i0 + n.i1 > x.rows()) shape_fail("row range out of bounds");
            Tensor out({n.i1, x.cols()});
            std::copy(x.data().begin() + n.i0 * x.cols(),
                      x.data().begin() + (n.i0 + n.i1) * x.cols(), out.data().begin());
            n.value = std::move(out);
            return;
        }
        case Op::SliceCols: {
            const Tensor& x = val(0);
            if (n.i0 + n.i1 > x.cols()) shape_fail("column range out of bounds");
            Tensor out({x.rows(), n.i1});
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < n.i1; ++j) out(i, j) = x(i, n.i0 + j);
            n.value = std::move(out);
            return;
        }
        case Op::PadRows: {
            const Tensor& g = val(0);
            if (n.i1 + g.rows() > n.i0) shape_fail("pad range out of bounds");
            Tensor out({n.i0, g.cols()});
            std::copy(g.data().begin(), g.data().end(), out.data().begin() + n.i1 * g.cols());
            n.value = std::move(out);
            return;
        }
        case Op::PadCols: {
            const Tensor& g = val(0);
            if (n.i1 + g.cols() > n.i0) shape_fail("pad range out of bounds");
            Tensor out({g.rows(), n.i0});
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) out(i, n.i1 + j) = g(i, j);
            n.value = std::move(out);
            return;
        }
        case Op::Broadcast: {
            const Tensor& s = val(0);
            if (!s.is_scalar()) shape_fail("source must be a scalar");
            std::vector<std::size_t> shape =
                n.i1 == 0 ? std::vector<std::size_t>{n.i0} : std::vector<std::size_t>{n.i0, n.i1};
            n.value = Tensor::full(std::move(shape), s[0]);
            return;
        }
        case Op::PairQuadform: {
            const Tensor& a = val(0);
            const Tensor& b = val(1);
            const Tensor& m = val(2);
            if (a.rows() != b.rows() || a.cols() != b.cols())
                shape_fail("branch matrices must have equal shape");
            if (a.rows() < 2) shape_fail("needs at least 2 rows");
            if (m.rows() != a.cols() || m.cols() != a.cols())
                shape_fail("metric dimensions do not match");
            n.value = Tensor::scalar(kernels::pair_quadform_sum(
                a.data().data(), b.data().data(), m.data().data(), a.rows(), a.cols()));
            return;
        }
        case Op::SpdInverse: {
            const Tensor& x = val(0);
            if (x.rows() != x.cols()) shape_fail("matrix must be square");
            n.value = spd_inverse_impl(x);
            return;
        }
    }
}

void Tape::accumulate(std::vector<NodeId>& adj, NodeId target, NodeId contribution) {
    if (target >= adj.size()) return;
    adj[target] = adj[target] == kNoNode ? contribution : add(adj[target], contribution);
}

void Tape::backprop_into_inputs(NodeId id, NodeId g, std::vector<NodeId>& adj) {
    const Node n = nodes_[id];  // copy; builders below may reallocate nodes_
    auto differentiable = [&](int slot) {
        return n.in[slot] != kNoNode && nodes_[n.in[slot]].op != Op::Constant;
    };

    switch (n.op) {
        case Op::Input:
        case Op::Constant:
        case Op::Heaviside:
            return;

        case Op::MatMul: {
            if (differentiable(0)) accumulate(adj, n.in[0], matmul(g, transpose(n.in[1])));
            if (differentiable(1)) accumulate(adj, n.in[1], matmul(transpose(n.in[0]), g));
            return;
        }
        case Op::Transpose: {
            if (differentiable(0)) accumulate(adj, n.in[0], transpose(g));
            return;
        }
        case Op::Add: {
            if (differentiable(0)) accumulate(adj, n.in[0], g);
            if (differentiable(1)) accumulate(adj, n.in[1], g);
            return;
        }
        case Op::AddRow: {
            if (differentiable(0)) accumulate(adj, n.in[0], g);
            if (differentiable(1)) accumulate(adj, n.in[1], colsum(g));
            return;
        }
        case Op::Sub: {
            if (differentiable(0)) accumulate(adj, n.in[0], g);
            if (differentiable(1)) accumulate(adj, n.in[1], affine(g, -1.0, 0.0));
            return;
        }
        case Op::Mul: {
            if (differentiable(0)) accumulate(adj, n.in[0], mul(g, n.in[1]));
            if (differentiable(1)) accumulate(adj, n.in[1], mul(g, n.in[0]));
            return;
        }
        case Op::Div: {
            if (differentiable(0)) accumulate(adj, n.in[0], div(g, n.in[1]));
            if (differentiable(1))
                accumulate(adj, n.in[1], affine(div(mul(g, id), n.in[1]), -1.0, 0.0));
            return;
        }
        case Op::RowScale: {
            if (differentiable(0)) accumulate(adj, n.in[0], row_scale(g, n.in[1]));
            if (differentiable(1)) accumulate(adj, n.in[1], rowsum(mul(g, n.in[0])));
            return;
        }
        case Op::ScalarMul: {
            if (differentiable(0)) accumulate(adj, n.in[0], sum(mul(g, n.in[1])));
            if (differentiable(1)) accumulate(adj, n.in[1], scalar_mul(n.in[0], g));
            return;
        }
        case Op::Affine: {
            if (differentiable(0)) accumulate(adj, n.in[0], affine(g, n.p0, 0.0));
            return;
        }
        case Op::Relu: {
            if (differentiable(0)) accumulate(adj, n.in[0], mul(g, heaviside(n.in[0])));
            return;
        }
        case Op::Softplus: {
            if (differentiable(0)) accumulate(adj, n.in[0], mul(g, sigmoid(n.in[0])));
            return;
        }
        case Op::Sigmoid: {
            if (differentiable(0))
                accumulate(adj, n.in[0], mul(g, mul(id, affine(id, -1.0, 1.0))));
            return;
        }
        case Op::Exp: {
            if (differentiable(0)) accumulate(adj, n.in[0], mul(g, id));
            return;
        }
        case Op::Log: {
            if (differentiable(0)) accumulate(adj, n.in[0], div(g, n.in[0]));
            return;
        }
        case Op::Sqrt: {
            if (differentiable(0)) accumulate(adj, n.in[0], div(affine(g, 0.5, 0.0), id));
            return;
        }
        case Op::SumAll: {
            if (differentiable(0)) accumulate(adj, n.in[0], broadcast(g, value(n.in[0]).shape()));
            return;
        }
        case Op::MeanAll: {
            if (differentiable(0)) {
                const double inv = 1.0 / static_cast<double>(value(n.in[0]).numel());
                accumulate(adj, n.in[0], affine(broadcast(g, value(n.in[0]).shape()), inv, 0.0));
            }
            return;
        }
        case Op::ColSum: {
            if (differentiable(0)) {
                NodeId ones = constant(Tensor::full({value(n.in[0]).rows(), 1}, 1.0));
                accumulate(adj, n.in[0], matmul(ones, g));
            }
            return;
        }
        case Op::RowSum: {
            if (differentiable(0)) {
                NodeId ones = constant(Tensor::full({1, value(n.in[0]).cols()}, 1.0));
                accumulate(adj, n.in[0], matmul(g, ones));
            }
            return;
        }
        case Op::ConcatRows: {
            const std::size_t ra = value(n.in[0]).rows();
            const std::size_t rb = value(n.in[1]).rows();
            if (differentiable(0)) accumulate(adj, n.in[0], slice_rows(g, 0, ra));
            if (differentiable(1)) accumulate(adj, n.in[1], slice_rows(g, ra, rb));
            return;
        }
        case Op::ConcatCols: {
            const std::size_t ca = value(n.in[0]).cols();
            const std::size_t cb = value(n.in[1]).cols();
            if (differentiable(0)) accumulate(adj, n.in[0], slice_cols(g, 0, ca));
            if (differentiable(1)) accumulate(adj, n.in[1], slice_cols(g, ca, cb));
            return;
        }
        case Op::SliceRows: {
            if (differentiable(0))
                accumulate(adj, n.in[0], pad_rows(g, value(n.in[0]).rows(), n.i0));
            return;
        }
        case Op::SliceCols: {
            if (differentiable(0))
                accumulate(adj, n.in[0], pad_cols(g, value(n.in[0]).cols(), n.i0));
            return;
        }
        case Op::PadRows: {
            if (differentiable(0))
                accumulate(adj, n.in[0], slice_rows(g, n.i1, value(n.in[0]).rows()));
            return;
        }
        case Op::PadCols: {
            if (differentiable(0))
                accumulate(adj, n.in[0], slice_cols(g, n.i1, value(n.in[0]).cols()));
            return;
        }
        case Op::Broadcast: {
            if (differentiable(0)) accumulate(adj, n.in[0], sum(g));
            return;
        }
        case Op::PairQuadform: {
            const NodeId a = n.in[0], b = n.in[1], m = n.in[2];
            const double rows = static_cast<double>(value(a).rows());
            NodeId s = add(m, transpose(m));
            NodeId ones = constant(Tensor::full({value(a).rows(), 1}, 1.0));
            if (differentiable(0)) {
                NodeId ta = sub(affine(a, rows - 1.0, 0.0), sub(matmul(ones, colsum(b)), b));
                accumulate(adj, a, scalar_mul(g, matmul(ta, s)));
            }
            if (differentiable(1)) {
                NodeId tb = sub(affine(b, rows - 1.0, 0.0), sub(matmul(ones, colsum(a)), a));
                accumulate(adj, b, scalar_mul(g, matmul(tb, s)));
            }
            if (differentiable(2)) {
                NodeId grams = add(affine(matmul(transpose(a), a), rows, 0.0),
                                   affine(matmul(transpose(b), b), rows, 0.0));
                NodeId cross = add(matmul(transpose(colsum(a)), colsum(b)),
                                   matmul(transpose(colsum(b)), colsum(a)));
                NodeId d = sub(a, b);
                NodeId q = sub(sub(grams, cross), matmul(transpose(d), d));
                accumulate(adj, m, scalar_mul(g, q));
            }
            return;
        }
        case Op::SpdInverse: {
            if (differentiable(0))
                accumulate(adj, n.in[0], affine(matmul(id, matmul(g, id)), -1.0, 0.0));
            return;
        }
    }
}

std::vector<NodeId> Tape::grad(NodeId loss, std::span<const NodeId> wrt) {
    if (!nodes_[loss].value.is_scalar())
        throw ContractViolation("grad: selected loss output is not a scalar");
    std::vector<NodeId> adj(static_cast<std::size_t>(loss) + 1, kNoNode);
    adj[loss] = constant(Tensor::full(nodes_[loss].value.shape(), 1.0));
    for (NodeId id = loss;; --id) {
        if (adj[id] != kNoNode) backprop_into_inputs(id, adj[id], adj);
        if (id == 0) break;
    }
    std::vector<NodeId> out;
    out.reserve(wrt.size());
    for (NodeId w : wrt) {
        if (w < adj.size() && adj[w] != kNoNode) {
            out.push_back(adj[w]);
        } else {
            out.push_back(constant(Tensor::zeros(nodes_[w].value.shape())));
        }
    }
    return out;
}

GradientResult evaluate_with_gradients(Tape& tape, NodeId loss_id, std::span<const NodeId> wrt) {
    GradientResult result;
    result.loss = tape.scalar_value(loss_id);
    std::vector<NodeId> gnodes = tape.grad(loss_id, wrt);
    result.gradients.reserve(gnodes.size());
    for (std::size_t i = 0; i < gnodes.size(); ++i) {
        Tensor g = tape.value(gnodes[i]);
        const Tensor& leaf = tape.value(wrt[i]);
        if (g.numel() != leaf.numel())
            throw ContractViolation("evaluate_with_gradients: gradient/input size mismatch");
        // normalize shape metadata to the leaf's (1 x n adjoints of rank-1 rows)
        result.gradients.push_back(Tensor(leaf.shape(), std::move(g.data())));
    }
    return result;
}

}  // namespace biasguard
