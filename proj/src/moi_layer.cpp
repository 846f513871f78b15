#include "moi/moi_layer.hpp"

#include <string>

#include "moi/rng.hpp"

namespace moi {

namespace {

Matrix apply_norm_plain(const MoiLayerParams& p, const Matrix& m) {
    switch (p.norm_kind) {
        case NormKind::layernorm:
            return layernorm(m, p.gamma, p.beta);
        case NormKind::none:
            return m;
        case NormKind::l2:
            return l2_normalize_rows(m);
        case NormKind::layer_scale:
            return mul_row_broadcast(m, p.gamma);
    }
    return m;
}

Tape::Var apply_norm_tape(Tape& tape, const BoundMoiLayer& layer, Tape::Var m) {
    switch (layer.params->norm_kind) {
        case NormKind::layernorm:
            return tape.layernorm(m, layer.gamma, layer.beta);
        case NormKind::none:
            return m;
        case NormKind::l2:
            return tape.l2_normalize_rows(m);
        case NormKind::layer_scale:
            return tape.mul_row(m, layer.gamma);
    }
    return m;
}

Matrix apply_activation_plain(const MoiLayerParams& p, const Matrix& m) {
    return p.activation == Activation::gelu ? gelu(m) : m;
}

Tape::Var apply_activation_tape(Tape& tape, const MoiLayerParams& p, Tape::Var m) {
    return p.activation == Activation::gelu ? tape.gelu(m) : m;
}

}  // namespace

void MoiLayerParams::validate() const {
    if (factors.empty()) throw ShapeError("interaction order must be >= 1");
    const std::size_t h = factors.front().cols;
    for (const Matrix& w : factors) {
        if (w.cols != h) {
            throw ShapeError("factor widths differ: " + std::to_string(w.cols) +
                             " vs " + std::to_string(h));
        }
    }
    if (biases.size() != factors.size()) {
        throw ShapeError("bias count must equal factor count");
    }
    for (const Matrix& b : biases) {
        if (b.rows != 1 || b.cols != h) {
            throw ShapeError("bias must be 1x" + std::to_string(h) + ", got " + b.shape_str());
        }
    }
    if (w_out.rows != h) {
        throw ShapeError("output matrix must have " + std::to_string(h) + " rows, got " +
                         w_out.shape_str());
    }
}

MoiLayerParams MoiLayerParams::init(std::size_t order, std::size_t input_dim,
                                    std::size_t hidden_dim, std::size_t output_dim,
                                    std::uint64_t seed) {
    if (order < 1) throw ConfigError("interaction order must be >= 1");
    Rng seeds(seed);
    MoiLayerParams p;
    p.factors.reserve(order);
    p.biases.reserve(order);
    for (std::size_t i = 0; i < order; ++i) {
        p.factors.push_back(truncated_normal_init(input_dim, hidden_dim, seeds.next_seed()));
        p.biases.emplace_back(1, hidden_dim, 0.0);
    }
    p.w_out = truncated_normal_init(hidden_dim, output_dim, seeds.next_seed());
    p.gamma = Matrix(1, hidden_dim, 1.0);
    p.beta = Matrix(1, hidden_dim, 0.0);
    return p;
}

std::vector<double> hadamard_interaction(const MoiLayerParams& p,
                                         const std::vector<std::vector<double>>& inputs) {
    p.validate();
    if (inputs.size() != p.order()) {
        throw ShapeError("expected " + std::to_string(p.order()) + " inputs, got " +
                         std::to_string(inputs.size()));
    }
    Matrix z(1, p.hidden_dim(), 1.0);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].size() != p.factors[i].rows) {
            throw ShapeError("input " + std::to_string(i) + " has length " +
                             std::to_string(inputs[i].size()) + ", factor expects " +
                             std::to_string(p.factors[i].rows));
        }
        Matrix proj = matmul(Matrix::row_vector(inputs[i]), p.factors[i]);
        if (p.use_bias) proj = add_row_broadcast(proj, p.biases[i]);
        z = hadamard(z, proj);
    }
    return z.data;
}

FullInteractionTensor materialize_parafac(const MoiLayerParams& p) {
    p.validate();
    if (p.use_bias) {
        throw InputError("materialize_parafac requires biases disabled");
    }
    return FullInteractionTensor(p.order(), materialize_rank1(p.factors));
}

Matrix moi_forward_batch(const MoiLayerParams& p, const Matrix& rows) {
    p.validate();
    Matrix product;
    for (std::size_t i = 0; i < p.order(); ++i) {
        if (rows.cols != p.factors[i].rows) {
            throw ShapeError("input width " + std::to_string(rows.cols) +
                             " does not match factor input dim " +
                             std::to_string(p.factors[i].rows));
        }
        Matrix proj = matmul(rows, p.factors[i]);
        if (p.use_bias) proj = add_row_broadcast(proj, p.biases[i]);
        if (p.norm_location == NormLocation::before_activation) {
            proj = apply_norm_plain(p, proj);
        }
        proj = apply_activation_plain(p, proj);
        product = (i == 0) ? std::move(proj) : hadamard(product, proj);
    }
    if (p.norm_location == NormLocation::after_product) {
        product = apply_norm_plain(p, product);
    }
    return matmul(product, p.w_out);
}

std::vector<double> moi_forward(const MoiLayerParams& p, const std::vector<double>& x) {
    return moi_forward_batch(p, Matrix::row_vector(x)).data;
}

BoundMoiLayer bind_moi_layer(MoiLayerParams& p, const LeafMaker& make_leaf) {
    p.validate();
    BoundMoiLayer layer;
    layer.params = &p;
    for (Matrix& w : p.factors) layer.factors.push_back(make_leaf(w));
    if (p.use_bias) {
        for (Matrix& b : p.biases) layer.biases.push_back(make_leaf(b));
    }
    layer.w_out = make_leaf(p.w_out);
    if (p.norm_kind == NormKind::layernorm) {
        layer.gamma = make_leaf(p.gamma);
        layer.beta = make_leaf(p.beta);
    } else if (p.norm_kind == NormKind::layer_scale) {
        layer.gamma = make_leaf(p.gamma);
    }
    return layer;
}

Tape::Var moi_forward_tape(Tape& tape, const BoundMoiLayer& layer, Tape::Var rows) {
    const MoiLayerParams& p = *layer.params;
    Tape::Var product;
    for (std::size_t i = 0; i < p.order(); ++i) {
        Tape::Var proj = tape.matmul(rows, layer.factors[i]);
        if (p.use_bias) proj = tape.add_row(proj, layer.biases[i]);
        if (p.norm_location == NormLocation::before_activation) {
            proj = apply_norm_tape(tape, layer, proj);
        }
        proj = apply_activation_tape(tape, p, proj);
        product = (i == 0) ? proj : tape.hadamard(product, proj);
    }
    if (p.norm_location == NormLocation::after_product) {
        product = apply_norm_tape(tape, layer, product);
    }
    return tape.matmul(product, layer.w_out);
}

GmlpBlockParams GmlpBlockParams::init(std::size_t seq_len, std::size_t channels,
                                      std::size_t hidden_dim, std::uint64_t seed) {
    Rng seeds(seed);
    GmlpBlockParams p;
    p.w1 = truncated_normal_init(channels, hidden_dim, seeds.next_seed());
    p.w2 = truncated_normal_init(channels, hidden_dim, seeds.next_seed());
    // Spatial gate starts nearly closed: weights near zero, biases at one.
    p.w_s = truncated_normal_init(seq_len, seq_len, seeds.next_seed(), 1e-4, 2e-4);
    p.gate_bias = Matrix(1, seq_len, 1.0);
    p.w_o = truncated_normal_init(hidden_dim, channels, seeds.next_seed());
    return p;
}

Matrix gmlp_block(const Matrix& x, const Matrix& w1, const Matrix& w2,
                  const Matrix& w_s, const Matrix& w_o) {
    GmlpBlockParams p;
    p.w1 = w1;
    p.w2 = w2;
    p.w_s = w_s;
    p.w_o = w_o;
    p.use_gate_bias = false;
    p.gate_bias = Matrix(1, x.rows, 0.0);
    return gmlp_block(p, x);
}

Matrix gmlp_block(const GmlpBlockParams& p, const Matrix& x) {
    if (x.rows != p.w_s.rows || p.w_s.rows != p.w_s.cols) {
        throw ShapeError("spatial gate expects square " + std::to_string(x.rows) + "x" +
                         std::to_string(x.rows) + " matrix, got " + p.w_s.shape_str());
    }
    Matrix left = gelu(matmul(x, p.w1));
    Matrix gate = matmul(p.w_s, gelu(matmul(x, p.w2)));
    if (p.use_gate_bias) {
        // gate_bias is per sequence position: add b_i to every channel of row i.
        gate = transpose(add_row_broadcast(transpose(gate), p.gate_bias));
    }
    return matmul(hadamard(left, gate), p.w_o);
}

BoundGmlpBlock bind_gmlp_block(GmlpBlockParams& p, const LeafMaker& make_leaf) {
    BoundGmlpBlock b;
    b.params = &p;
    b.w1 = make_leaf(p.w1);
    b.w2 = make_leaf(p.w2);
    b.w_s = make_leaf(p.w_s);
    if (p.use_gate_bias) b.gate_bias = make_leaf(p.gate_bias);
    b.w_o = make_leaf(p.w_o);
    return b;
}

Tape::Var gmlp_block_tape(Tape& tape, const BoundGmlpBlock& block, Tape::Var x) {
    const GmlpBlockParams& p = *block.params;
    Tape::Var left = tape.gelu(tape.matmul(x, block.w1));
    Tape::Var gate = tape.matmul(block.w_s, tape.gelu(tape.matmul(x, block.w2)));
    if (p.use_gate_bias) {
        gate = tape.transpose(tape.add_row(tape.transpose(gate), block.gate_bias));
    }
    return tape.matmul(tape.hadamard(left, gate), block.w_o);
}

}  // namespace moi
