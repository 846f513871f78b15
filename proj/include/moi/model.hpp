#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moi/moi_layer.hpp"
#include "moi/rng.hpp"

namespace moi {

const char* to_string(NormKind k);
const char* to_string(NormLocation l);
const char* to_string(Activation a);
NormKind parse_norm_kind(const std::string& s);
NormLocation parse_norm_location(const std::string& s);
Activation parse_activation(const std::string& s);

struct ModelConfig {
    enum class TokenMixerKind { moi, linear };
    enum class Arch { moi_mixer, gmlp };

    std::size_t layers = 2;
    std::size_t hidden = 256;         // token width d_h
    std::size_t token_hidden = 0;     // d_s; 0 derives d_h / 2
    std::size_t channel_hidden = 0;   // d_c; 0 derives 6*d_h/(k_c+1) (4*d_h for gmlp)
    std::size_t token_order = 1;      // k_s
    std::size_t channel_order = 2;    // k_c
    std::size_t seq_len = 50;         // s
    std::size_t vocab = 0;            // items use ids 1..vocab
    double dropout = 0.2;
    bool positional_embedding = false;
    TokenMixerKind token_mixer = TokenMixerKind::moi;
    Arch arch = Arch::moi_mixer;
    NormKind norm_kind = NormKind::layernorm;
    NormLocation norm_location = NormLocation::after_product;
    bool use_bias = true;
    bool tie_head = true;
    Activation activation = Activation::gelu;

    std::size_t token_hidden_dim() const { return token_hidden ? token_hidden : hidden / 2; }
    std::size_t channel_hidden_dim() const {
        if (channel_hidden) return channel_hidden;
        if (arch == Arch::gmlp) return 4 * hidden;
        return 6 * hidden / (channel_order + 1);
    }
    int pad_id() const { return 0; }
    int mask_id() const { return static_cast<int>(vocab) + 1; }

    void validate() const;
};

const char* to_string(ModelConfig::TokenMixerKind k);
const char* to_string(ModelConfig::Arch a);
ModelConfig::TokenMixerKind parse_token_mixer(const std::string& s);
ModelConfig::Arch parse_arch(const std::string& s);

enum class ParamKind {
    embedding,
    encoder_weight,
    encoder_bias,
    block_norm,   // the per-block pre-mixer normalizations
    mixer_norm,   // normalization inside an interaction layer
    head,
};

struct EncoderLayer {
    Matrix norm1_gamma, norm1_beta;
    Matrix norm2_gamma, norm2_beta;
    MoiLayerParams token_mixer;
    Matrix token_linear;  // single-linear token mixer variant, s x s
    MoiLayerParams channel_mixer;
    GmlpBlockParams gmlp;
};

/// Mixer model for next-item prediction: item embedding, a stack of
/// token-/channel-mixing blocks with residuals, and a two-layer GELU head
/// projecting every position onto item logits.
class MoiMixerModel {
public:
    ModelConfig config;
    Matrix embedding;   // (vocab + 2) x d_h; row 0 = pad, row vocab+1 = mask
    Matrix positional;  // s x d_h when toggled
    std::vector<EncoderLayer> encoder;
    Matrix head_w1, head_b1;  // d_h x d_h, 1 x d_h
    Matrix head_w2;           // d_h x vocab when the head is untied
    Matrix head_b2;           // 1 x vocab

    static MoiMixerModel init(const ModelConfig& config, std::uint64_t seed);

    // Rows of the embedding table selected by id (plus positional rows when
    // toggled). Ids must lie in [0, vocab + 1].
    Matrix embed(const std::vector<int>& ids) const;

    // Logits (s x vocab) for a sequence of at most s ids (left-padded).
    Matrix forward(const std::vector<int>& ids) const;

    // One encoder block applied to an s x d_h input (inference, no dropout).
    Matrix encoder_block_forward(std::size_t layer_index, const Matrix& x) const;

    struct BoundParamRef {
        Matrix* value = nullptr;
        Tape::Var var;
    };

    struct BoundEncoderLayer {
        Tape::Var norm1_gamma, norm1_beta, norm2_gamma, norm2_beta;
        BoundMoiLayer token_mixer;
        Tape::Var token_linear;
        BoundMoiLayer channel_mixer;
        BoundGmlpBlock gmlp;
    };

    struct Bound {
        Tape::Var embedding, positional;
        std::vector<BoundEncoderLayer> layers;
        Tape::Var head_w1, head_b1, head_w2, head_b2;
        std::vector<BoundParamRef> entries;  // tracked parameters, bind order
    };

    // Registers every parameter on the tape with gradient tracking.
    Bound bind(Tape& tape);
    // Same graph structure with constant leaves, for inference.
    Bound bind_inference(Tape& tape) const;
    // Wires externally created tape handles (named_params order) into the
    // model structure; used by gradient checks.
    Bound bind_external(const std::vector<Tape::Var>& vars) const;

    // Builds the forward graph; `training` enables dropout driven by `rng`.
    Tape::Var forward_tape(Tape& tape, const Bound& bound, const std::vector<int>& ids,
                           bool training = false, Rng* rng = nullptr) const;

    struct NamedParam {
        std::string name;
        const Matrix* value;
        ParamKind kind;
    };
    std::vector<NamedParam> named_params() const;

    void save(const std::string& path) const;
    static MoiMixerModel load(const std::string& path);

private:
    Tape::Var encoder_block_tape(Tape& tape, const BoundEncoderLayer& layer, Tape::Var x,
                                 const std::function<Tape::Var(Tape::Var)>& maybe_dropout) const;
};

}  // namespace moi
