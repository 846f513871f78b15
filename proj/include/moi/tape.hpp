#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "moi/kernels.hpp"
#include "moi/matrix.hpp"

namespace moi {

/// Reverse-mode gradient tape over a fixed set of dense primitives. Each
/// operation appends a node holding its forward value; backward() replays the
/// record in reverse and accumulates exact analytic gradients into every
/// parameter leaf. One tape per forward pass; tapes are not thread-safe, but
/// distinct tapes may run concurrently.
class Tape {
public:
    struct Var {
        std::size_t id = static_cast<std::size_t>(-1);
    };

    // Leaves. Parameters track gradients, constants do not.
    Var parameter(const Matrix& value) { return leaf(value, true); }
    Var constant(const Matrix& value) { return leaf(value, false); }

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var scale(Var a, double c);
    Var transpose(Var a);
    Var add_row(Var a, Var row);   // broadcast 1 x d row over every row of a
    Var mul_row(Var a, Var row);   // broadcast per-column scale
    Var gelu(Var a);
    Var layernorm(Var x, Var gamma, Var beta, double eps = 1e-12);
    Var l2_normalize_rows(Var x);
    Var gather_rows(Var table, const std::vector<int>& ids);
    Var sum(Var a);                // 1 x 1

    // Mean softmax cross-entropy over the given (row, target-class) pairs;
    // rows not listed receive zero gradient. Fused for stability.
    Var masked_softmax_cross_entropy(Var logits,
                                     const std::vector<std::size_t>& positions,
                                     const std::vector<int>& targets);

    void backward(Var scalar_loss);

    const Matrix& value(Var v) const { return nodes_[v.id].value; }
    const Matrix& grad(Var v) const;
    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        leaf,
        matmul,
        add,
        sub,
        hadamard,
        scale,
        transpose,
        add_row,
        mul_row,
        gelu,
        layernorm,
        l2_normalize_rows,
        gather_rows,
        sum,
        masked_xent,
    };

    struct Node {
        Op op = Op::leaf;
        std::size_t a = 0, b = 0, c = 0;
        bool requires_grad = false;
        bool has_c = false;
        double scalar = 0.0;
        Matrix value;
        Matrix grad;
        Matrix aux1, aux2;              // op-specific saved intermediates
        std::vector<int> ids;           // gather indices / xent targets
        std::vector<std::size_t> positions;
    };

    Var leaf(const Matrix& value, bool requires_grad);
    Var push(Node node);
    void accumulate(std::size_t id, const Matrix& delta);
    Matrix& grad_buffer(std::size_t id);

    std::vector<Node> nodes_;
};

/// Builds a scalar loss from parameter leaves; used by check_gradient to
/// evaluate the same function at perturbed parameter values.
using TapeFunction = std::function<Tape::Var(Tape&, const std::vector<Tape::Var>&)>;

/// Compares tape gradients against central finite differences (default step
/// 1e-5) over every element of every parameter; returns the maximum relative
/// error, with the denominator floored so exact zero gradients compare by
/// absolute error.
double check_gradient(const TapeFunction& f, const std::vector<Matrix>& params,
                      double step = 1e-5);

}  // namespace moi
