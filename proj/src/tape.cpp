#include "moi/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace moi {

Tape::Var Tape::leaf(const Matrix& value, bool requires_grad) {
    Node n;
    n.op = Op::leaf;
    n.requires_grad = requires_grad;
    n.value = value;
    return push(std::move(n));
}

Tape::Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Tape::Var Tape::matmul(Var a, Var b) {
    Node n;
    n.op = Op::matmul;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
    n.value = moi::matmul(nodes_[a.id].value, nodes_[b.id].value);
    return push(std::move(n));
}

Tape::Var Tape::add(Var a, Var b) {
    Node n;
    n.op = Op::add;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
    n.value = moi::add(nodes_[a.id].value, nodes_[b.id].value);
    return push(std::move(n));
}

Tape::Var Tape::sub(Var a, Var b) {
    Node n;
    n.op = Op::sub;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
    n.value = moi::sub(nodes_[a.id].value, nodes_[b.id].value);
    return push(std::move(n));
}

Tape::Var Tape::hadamard(Var a, Var b) {
    Node n;
    n.op = Op::hadamard;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
    n.value = moi::hadamard(nodes_[a.id].value, nodes_[b.id].value);
    return push(std::move(n));
}

Tape::Var Tape::scale(Var a, double c) {
    Node n;
    n.op = Op::scale;
    n.a = a.id;
    n.scalar = c;
    n.requires_grad = nodes_[a.id].requires_grad;
    n.value = moi::scale(nodes_[a.id].value, c);
    return push(std::move(n));
}

Tape::Var Tape::transpose(Var a) {
    Node n;
    n.op = Op::transpose;
    n.a = a.id;
    n.requires_grad = nodes_[a.id].requires_grad;
    n.value = moi::transpose(nodes_[a.id].value);
    return push(std::move(n));
}

Tape::Var Tape::add_row(Var a, Var row) {
    Node n;
    n.op = Op::add_row;
    n.a = a.id;
    n.b = row.id;
    n.requires_grad = nodes_[a.id].requires_grad || nodes_[row.id].requires_grad;
    n.value = moi::add_row_broadcast(nodes_[a.id].value, nodes_[row.id].value);
    return push(std::move(n));
}

Tape::Var Tape::mul_row(Var a, Var row) {
    Node n;
    n.op = Op::mul_row;
    n.a = a.id;
    n.b = row.id;
    n.requires_grad = nodes_[a.id].requires_grad || nodes_[row.id].requires_grad;
    n.value = moi::mul_row_broadcast(nodes_[a.id].value, nodes_[row.id].value);
    return push(std::move(n));
}

Tape::Var Tape::gelu(Var a) {
    Node n;
    n.op = Op::gelu;
    n.a = a.id;
    n.requires_grad = nodes_[a.id].requires_grad;
    n.value = moi::gelu(nodes_[a.id].value);
    return push(std::move(n));
}

Tape::Var Tape::layernorm(Var x, Var gamma, Var beta, double eps) {
    const Matrix& xv = nodes_[x.id].value;
    const Matrix& gv = nodes_[gamma.id].value;
    const Matrix& bv = nodes_[beta.id].value;
    Node n;
    n.op = Op::layernorm;
    n.a = x.id;
    n.b = gamma.id;
    n.c = beta.id;
    n.has_c = true;
    n.scalar = eps;
    n.requires_grad = nodes_[x.id].requires_grad || nodes_[gamma.id].requires_grad ||
                      nodes_[beta.id].requires_grad;
    if (gv.rows != 1 || gv.cols != xv.cols || bv.rows != 1 || bv.cols != xv.cols) {
        throw ShapeError("layernorm: gamma/beta must be 1x" + std::to_string(xv.cols));
    }
    // Save the normalized rows and per-row inverse std for backward.
    n.aux1 = Matrix(xv.rows, xv.cols);
    n.aux2 = Matrix(xv.rows, 1);
    n.value = Matrix(xv.rows, xv.cols);
    const double cols = static_cast<double>(xv.cols);
    for (std::size_t i = 0; i < xv.rows; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < xv.cols; ++j) mean += xv.at(i, j);
        mean /= cols;
        double var = 0.0;
        for (std::size_t j = 0; j < xv.cols; ++j) {
            const double d = xv.at(i, j) - mean;
            var += d * d;
        }
        var /= cols;
        const double inv_std = 1.0 / std::sqrt(var + eps);
        n.aux2.at(i, 0) = inv_std;
        for (std::size_t j = 0; j < xv.cols; ++j) {
            const double xhat = (xv.at(i, j) - mean) * inv_std;
            n.aux1.at(i, j) = xhat;
            n.value.at(i, j) = gv.data[j] * xhat + bv.data[j];
        }
    }
    return push(std::move(n));
}

Tape::Var Tape::l2_normalize_rows(Var x) {
    const Matrix& xv = nodes_[x.id].value;
    Node n;
    n.op = Op::l2_normalize_rows;
    n.a = x.id;
    n.requires_grad = nodes_[x.id].requires_grad;
    n.aux2 = Matrix(xv.rows, 1);
    n.value = Matrix(xv.rows, xv.cols);
    for (std::size_t i = 0; i < xv.rows; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < xv.cols; ++j) sq += xv.at(i, j) * xv.at(i, j);
        const double norm = std::sqrt(sq);
        n.aux2.at(i, 0) = norm;
        for (std::size_t j = 0; j < xv.cols; ++j) {
            n.value.at(i, j) = norm == 0.0 ? xv.at(i, j) : xv.at(i, j) / norm;
        }
    }
    return push(std::move(n));
}

Tape::Var Tape::gather_rows(Var table, const std::vector<int>& ids) {
    const Matrix& tv = nodes_[table.id].value;
    Node n;
    n.op = Op::gather_rows;
    n.a = table.id;
    n.requires_grad = nodes_[table.id].requires_grad;
    n.ids = ids;
    n.value = Matrix(ids.size(), tv.cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows) {
            throw InputError("gather_rows: id " + std::to_string(ids[i]) +
                             " out of range [0, " + std::to_string(tv.rows) + ")");
        }
        for (std::size_t j = 0; j < tv.cols; ++j) {
            n.value.at(i, j) = tv.at(static_cast<std::size_t>(ids[i]), j);
        }
    }
    return push(std::move(n));
}

Tape::Var Tape::sum(Var a) {
    Node n;
    n.op = Op::sum;
    n.a = a.id;
    n.requires_grad = nodes_[a.id].requires_grad;
    n.value = Matrix(1, 1, sum_all(nodes_[a.id].value));
    return push(std::move(n));
}

Tape::Var Tape::masked_softmax_cross_entropy(Var logits,
                                             const std::vector<std::size_t>& positions,
                                             const std::vector<int>& targets) {
    if (positions.empty() || positions.size() != targets.size()) {
        throw InputError("masked_softmax_cross_entropy: need at least one (position, target) pair");
    }
    const Matrix& lv = nodes_[logits.id].value;
    Node n;
    n.op = Op::masked_xent;
    n.a = logits.id;
    n.requires_grad = nodes_[logits.id].requires_grad;
    n.positions = positions;
    n.ids = targets;
    n.aux1 = Matrix(positions.size(), lv.cols);  // softmax of each masked row
    double loss = 0.0;
    for (std::size_t m = 0; m < positions.size(); ++m) {
        const std::size_t p = positions[m];
        if (p >= lv.rows) {
            throw InputError("masked_softmax_cross_entropy: position " + std::to_string(p) +
                             " outside " + std::to_string(lv.rows) + " rows");
        }
        if (targets[m] < 0 || static_cast<std::size_t>(targets[m]) >= lv.cols) {
            throw InputError("masked_softmax_cross_entropy: target " + std::to_string(targets[m]) +
                             " outside " + std::to_string(lv.cols) + " classes");
        }
        double mx = lv.at(p, 0);
        for (std::size_t j = 1; j < lv.cols; ++j) mx = std::max(mx, lv.at(p, j));
        double z = 0.0;
        for (std::size_t j = 0; j < lv.cols; ++j) z += std::exp(lv.at(p, j) - mx);
        for (std::size_t j = 0; j < lv.cols; ++j) {
            n.aux1.at(m, j) = std::exp(lv.at(p, j) - mx) / z;
        }
        loss += mx + std::log(z) - lv.at(p, static_cast<std::size_t>(targets[m]));
    }
    n.value = Matrix(1, 1, loss / static_cast<double>(positions.size()));
    return push(std::move(n));
}

const Matrix& Tape::grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (!n.requires_grad) {
        throw std::logic_error("grad requested for a constant node");
    }
    if (n.grad.size() == 0) {
        throw std::logic_error("grad requested before backward()");
    }
    return n.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& delta) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    for (std::size_t i = 0; i < delta.size(); ++i) n.grad.data[i] += delta.data[i];
}

Matrix& Tape::grad_buffer(std::size_t id) { return nodes_[id].grad; }

void Tape::backward(Var loss) {
    const Node& top = nodes_[loss.id];
    if (top.value.rows != 1 || top.value.cols != 1) {
        throw ShapeError("backward: loss must be 1x1, got " + top.value.shape_str());
    }
    for (Node& n : nodes_) {
        if (n.requires_grad) n.grad = Matrix(n.value.rows, n.value.cols);
    }
    if (!nodes_[loss.id].requires_grad) return;  // loss independent of parameters
    nodes_[loss.id].grad.at(0, 0) = 1.0;

    for (std::size_t idx = nodes_.size(); idx-- > 0;) {
        Node& n = nodes_[idx];
        if (!n.requires_grad) continue;
        const Matrix& g = n.grad;
        switch (n.op) {
            case Op::leaf:
                break;
            case Op::matmul: {
                const Matrix& av = nodes_[n.a].value;
                const Matrix& bv = nodes_[n.b].value;
                if (nodes_[n.a].requires_grad) accumulate(n.a, moi::matmul(g, moi::transpose(bv)));
                if (nodes_[n.b].requires_grad) accumulate(n.b, moi::matmul(moi::transpose(av), g));
                break;
            }
            case Op::add:
                accumulate(n.a, g);
                accumulate(n.b, g);
                break;
            case Op::sub:
                accumulate(n.a, g);
                if (nodes_[n.b].requires_grad) accumulate(n.b, moi::scale(g, -1.0));
                break;
            case Op::hadamard:
                if (nodes_[n.a].requires_grad) accumulate(n.a, moi::hadamard(g, nodes_[n.b].value));
                if (nodes_[n.b].requires_grad) accumulate(n.b, moi::hadamard(g, nodes_[n.a].value));
                break;
            case Op::scale:
                accumulate(n.a, moi::scale(g, n.scalar));
                break;
            case Op::transpose:
                accumulate(n.a, moi::transpose(g));
                break;
            case Op::add_row:
                accumulate(n.a, g);
                if (nodes_[n.b].requires_grad) accumulate(n.b, column_sums(g));
                break;
            case Op::mul_row: {
                const Matrix& row = nodes_[n.b].value;
                if (nodes_[n.a].requires_grad) accumulate(n.a, mul_row_broadcast(g, row));
                if (nodes_[n.b].requires_grad) {
                    accumulate(n.b, column_sums(moi::hadamard(g, nodes_[n.a].value)));
                }
                break;
            }
            case Op::gelu: {
                const Matrix& xv = nodes_[n.a].value;
                Matrix dx(xv.rows, xv.cols);
                for (std::size_t i = 0; i < xv.size(); ++i) {
                    dx.data[i] = g.data[i] * gelu_derivative(xv.data[i]);
                }
                accumulate(n.a, dx);
                break;
            }
            case Op::layernorm: {
                const Matrix& xhat = n.aux1;
                const Matrix& inv_std = n.aux2;
                const Matrix& gv = nodes_[n.b].value;
                const std::size_t rows = xhat.rows, cols = xhat.cols;
                if (nodes_[n.b].requires_grad) {
                    accumulate(n.b, column_sums(moi::hadamard(g, xhat)));
                }
                if (nodes_[n.c].requires_grad) accumulate(n.c, column_sums(g));
                if (nodes_[n.a].requires_grad) {
                    Matrix dx(rows, cols);
                    for (std::size_t i = 0; i < rows; ++i) {
                        double mean_h = 0.0, mean_hx = 0.0;
                        for (std::size_t j = 0; j < cols; ++j) {
                            const double h = g.at(i, j) * gv.data[j];
                            mean_h += h;
                            mean_hx += h * xhat.at(i, j);
                        }
                        mean_h /= static_cast<double>(cols);
                        mean_hx /= static_cast<double>(cols);
                        for (std::size_t j = 0; j < cols; ++j) {
                            const double h = g.at(i, j) * gv.data[j];
                            dx.at(i, j) = inv_std.at(i, 0) *
                                          (h - mean_h - xhat.at(i, j) * mean_hx);
                        }
                    }
                    accumulate(n.a, dx);
                }
                break;
            }
            case Op::l2_normalize_rows: {
                const Matrix& y = n.value;
                const Matrix& norms = n.aux2;
                Matrix dx(y.rows, y.cols);
                for (std::size_t i = 0; i < y.rows; ++i) {
                    const double norm = norms.at(i, 0);
                    if (norm == 0.0) {
                        for (std::size_t j = 0; j < y.cols; ++j) dx.at(i, j) = g.at(i, j);
                        continue;
                    }
                    double gy = 0.0;
                    for (std::size_t j = 0; j < y.cols; ++j) gy += g.at(i, j) * y.at(i, j);
                    for (std::size_t j = 0; j < y.cols; ++j) {
                        dx.at(i, j) = (g.at(i, j) - y.at(i, j) * gy) / norm;
                    }
                }
                accumulate(n.a, dx);
                break;
            }
            case Op::gather_rows: {
                Node& table = nodes_[n.a];
                if (table.requires_grad) {
                    for (std::size_t i = 0; i < n.ids.size(); ++i) {
                        const std::size_t r = static_cast<std::size_t>(n.ids[i]);
                        for (std::size_t j = 0; j < g.cols; ++j) {
                            table.grad.at(r, j) += g.at(i, j);
                        }
                    }
                }
                break;
            }
            case Op::sum: {
                const Matrix& av = nodes_[n.a].value;
                accumulate(n.a, Matrix(av.rows, av.cols, g.at(0, 0)));
                break;
            }
            case Op::masked_xent: {
                Node& logits = nodes_[n.a];
                if (logits.requires_grad) {
                    const double w = g.at(0, 0) / static_cast<double>(n.positions.size());
                    for (std::size_t m = 0; m < n.positions.size(); ++m) {
                        const std::size_t p = n.positions[m];
                        for (std::size_t j = 0; j < logits.value.cols; ++j) {
                            double d = n.aux1.at(m, j);
                            if (j == static_cast<std::size_t>(n.ids[m])) d -= 1.0;
                            logits.grad.at(p, j) += w * d;
                        }
                    }
                }
                break;
            }
        }
    }
}

double check_gradient(const TapeFunction& f, const std::vector<Matrix>& params,
                      double step) {
    Tape tape;
    std::vector<Tape::Var> vars;
    vars.reserve(params.size());
    for (const Matrix& p : params) vars.push_back(tape.parameter(p));
    Tape::Var loss = f(tape, vars);
    tape.backward(loss);
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (Tape::Var v : vars) analytic.push_back(tape.grad(v));

    std::vector<Matrix> work = params;
    auto eval = [&]() {
        Tape t;
        std::vector<Tape::Var> vs;
        vs.reserve(work.size());
        for (const Matrix& p : work) vs.push_back(t.parameter(p));
        return t.value(f(t, vs)).at(0, 0);
    };

    double max_err = 0.0;
    for (std::size_t pi = 0; pi < work.size(); ++pi) {
        for (std::size_t e = 0; e < work[pi].size(); ++e) {
            const double orig = work[pi].data[e];
            work[pi].data[e] = orig + step;
            const double fp = eval();
            work[pi].data[e] = orig - step;
            const double fm = eval();
            work[pi].data[e] = orig;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[pi].data[e];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-3});
            max_err = std::max(max_err, std::fabs(a - numeric) / denom);
        }
    }
    return max_err;
}

}  // namespace moi
