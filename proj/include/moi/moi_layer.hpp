#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "moi/matrix.hpp"
#include "moi/tape.hpp"
#include "moi/tensor.hpp"

namespace moi {

enum class NormKind { layernorm, none, l2, layer_scale };
enum class NormLocation { after_product, before_activation };
enum class Activation { gelu, identity };

/// Parameters of one multi-order interaction layer of order k:
/// out = W_o^T( norm( act(W_1^T x + b_1) (.) ... (.) act(W_k^T x + b_k) ) ).
/// With layer_scale, `gamma` doubles as the per-channel diagonal scale.
struct MoiLayerParams {
    std::vector<Matrix> factors;  // W_i: d_i x h
    std::vector<Matrix> biases;   // 1 x h each, used when use_bias
    Matrix w_out;                 // h x d_out
    Matrix gamma;                 // 1 x h
    Matrix beta;                  // 1 x h
    bool use_bias = true;
    NormKind norm_kind = NormKind::layernorm;
    NormLocation norm_location = NormLocation::after_product;
    Activation activation = Activation::gelu;

    std::size_t order() const { return factors.size(); }
    std::size_t hidden_dim() const { return factors.front().cols; }
    std::size_t input_dim(std::size_t i = 0) const { return factors[i].rows; }
    std::size_t output_dim() const { return w_out.cols; }

    void validate() const;

    static MoiLayerParams init(std::size_t order, std::size_t input_dim,
                               std::size_t hidden_dim, std::size_t output_dim,
                               std::uint64_t seed);
};

// Low-rank interaction z = (W_1^T x_1 + b_1) (.) ... (.) (W_k^T x_k + b_k),
// biases included when toggled. Inputs may have distinct dims (test surface);
// no activation or normalization is applied here.
std::vector<double> hadamard_interaction(const MoiLayerParams& p,
                                         const std::vector<std::vector<double>>& inputs);

// Expands the factor matrices into the rank-1 full weight tensor; requires
// biases disabled and the result under the oracle size cap.
FullInteractionTensor materialize_parafac(const MoiLayerParams& p);

// Full layer on a batch of row vectors (each row one instance).
Matrix moi_forward_batch(const MoiLayerParams& p, const Matrix& rows);

// Single-input form: every factor consumes the same x.
std::vector<double> moi_forward(const MoiLayerParams& p, const std::vector<double>& x);

/// Tape handles for one layer's parameters.
struct BoundMoiLayer {
    std::vector<Tape::Var> factors;
    std::vector<Tape::Var> biases;
    Tape::Var w_out, gamma, beta;
    const MoiLayerParams* params = nullptr;
};

using LeafMaker = std::function<Tape::Var(Matrix&)>;

BoundMoiLayer bind_moi_layer(MoiLayerParams& p, const LeafMaker& make_leaf);
Tape::Var moi_forward_tape(Tape& tape, const BoundMoiLayer& layer, Tape::Var rows);

/// Spatial-gating block Z = (act(X W_1) (.) (W_s act(X W_2) + gate_bias 1^T)) W_o.
struct GmlpBlockParams {
    Matrix w1;         // c x h
    Matrix w2;         // c x h
    Matrix w_s;        // s x s
    Matrix gate_bias;  // 1 x s, added per row of the gating branch
    Matrix w_o;        // h x c
    bool use_gate_bias = true;

    static GmlpBlockParams init(std::size_t seq_len, std::size_t channels,
                                std::size_t hidden_dim, std::uint64_t seed);
};

Matrix gmlp_block(const Matrix& x, const Matrix& w1, const Matrix& w2,
                  const Matrix& w_s, const Matrix& w_o);
Matrix gmlp_block(const GmlpBlockParams& p, const Matrix& x);

struct BoundGmlpBlock {
    Tape::Var w1, w2, w_s, gate_bias, w_o;
    const GmlpBlockParams* params = nullptr;
};

BoundGmlpBlock bind_gmlp_block(GmlpBlockParams& p, const LeafMaker& make_leaf);
Tape::Var gmlp_block_tape(Tape& tape, const BoundGmlpBlock& block, Tape::Var x);

}  // namespace moi
