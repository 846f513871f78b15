#include "moi/model.hpp"

#include "moi/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace moi {

const char* to_string(NormKind k) {
    switch (k) {
        case NormKind::layernorm: return "layernorm";
        case NormKind::none: return "none";
        case NormKind::l2: return "l2";
        case NormKind::layer_scale: return "layer-scale";
    }
    return "?";
}

const char* to_string(NormLocation l) {
    return l == NormLocation::after_product ? "after-product" : "before-activation";
}

const char* to_string(Activation a) {
    return a == Activation::gelu ? "gelu" : "identity";
}

const char* to_string(ModelConfig::TokenMixerKind k) {
    return k == ModelConfig::TokenMixerKind::moi ? "moi" : "linear";
}

const char* to_string(ModelConfig::Arch a) {
    return a == ModelConfig::Arch::moi_mixer ? "moi-mixer" : "gmlp";
}

NormKind parse_norm_kind(const std::string& s) {
    if (s == "layernorm") return NormKind::layernorm;
    if (s == "none") return NormKind::none;
    if (s == "l2") return NormKind::l2;
    if (s == "layer-scale") return NormKind::layer_scale;
    throw ConfigError("unknown norm_kind '" + s + "'");
}

NormLocation parse_norm_location(const std::string& s) {
    if (s == "after-product") return NormLocation::after_product;
    if (s == "before-activation") return NormLocation::before_activation;
    throw ConfigError("unknown norm_location '" + s + "'");
}

Activation parse_activation(const std::string& s) {
    if (s == "gelu") return Activation::gelu;
    if (s == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + s + "'");
}

ModelConfig::TokenMixerKind parse_token_mixer(const std::string& s) {
    if (s == "moi") return ModelConfig::TokenMixerKind::moi;
    if (s == "linear") return ModelConfig::TokenMixerKind::linear;
    throw ConfigError("unknown token_mixer '" + s + "'");
}

ModelConfig::Arch parse_arch(const std::string& s) {
    if (s == "moi-mixer") return ModelConfig::Arch::moi_mixer;
    if (s == "gmlp") return ModelConfig::Arch::gmlp;
    throw ConfigError("unknown arch '" + s + "'");
}

void ModelConfig::validate() const {
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (token_order < 1 || channel_order < 1) {
        throw ConfigError("interaction orders must be >= 1");
    }
    if (hidden < 1 || seq_len < 1) throw ConfigError("hidden and seq_len must be >= 1");
    if (vocab < 1) throw ConfigError("vocab must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    if (token_hidden_dim() < 1) throw ConfigError("token hidden dim resolves to 0");
    if (channel_hidden_dim() < 1) throw ConfigError("channel hidden dim resolves to 0");
}

namespace {

MoiLayerParams make_mixer(std::size_t order, std::size_t input_dim, std::size_t hidden_dim,
                          const ModelConfig& config, std::uint64_t seed) {
    MoiLayerParams p = MoiLayerParams::init(order, input_dim, hidden_dim, input_dim, seed);
    p.use_bias = config.use_bias;
    // A first-order layer has no product to stabilize, so it carries no norm.
    p.norm_kind = order >= 2 ? config.norm_kind : NormKind::none;
    p.norm_location = config.norm_location;
    p.activation = config.activation;
    if (p.norm_kind == NormKind::layer_scale) {
        p.gamma = Matrix(1, hidden_dim, 1e-4);
    }
    return p;
}

}  // namespace

MoiMixerModel MoiMixerModel::init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng seeds(seed);
    MoiMixerModel model;
    model.config = config;
    model.embedding = truncated_normal_init(config.vocab + 2, config.hidden, seeds.next_seed());
    if (config.positional_embedding) {
        model.positional = truncated_normal_init(config.seq_len, config.hidden, seeds.next_seed());
    }
    model.encoder.resize(config.layers);
    for (EncoderLayer& layer : model.encoder) {
        layer.norm1_gamma = Matrix(1, config.hidden, 1.0);
        layer.norm1_beta = Matrix(1, config.hidden, 0.0);
        if (config.arch == ModelConfig::Arch::gmlp) {
            layer.gmlp = GmlpBlockParams::init(config.seq_len, config.hidden,
                                               config.channel_hidden_dim(), seeds.next_seed());
            continue;
        }
        layer.norm2_gamma = Matrix(1, config.hidden, 1.0);
        layer.norm2_beta = Matrix(1, config.hidden, 0.0);
        if (config.token_mixer == ModelConfig::TokenMixerKind::linear) {
            layer.token_linear =
                truncated_normal_init(config.seq_len, config.seq_len, seeds.next_seed());
        } else {
            layer.token_mixer = make_mixer(config.token_order, config.seq_len,
                                           config.token_hidden_dim(), config, seeds.next_seed());
        }
        layer.channel_mixer = make_mixer(config.channel_order, config.hidden,
                                         config.channel_hidden_dim(), config, seeds.next_seed());
    }
    model.head_w1 = truncated_normal_init(config.hidden, config.hidden, seeds.next_seed());
    model.head_b1 = Matrix(1, config.hidden, 0.0);
    if (!config.tie_head) {
        model.head_w2 = truncated_normal_init(config.hidden, config.vocab, seeds.next_seed());
    }
    model.head_b2 = Matrix(1, config.vocab, 0.0);
    return model;
}

namespace {

// Single traversal defining the canonical parameter order used by binding,
// naming, checkpoints, and the optimizer. `reg(name, kind, matrix)` returns
// the tape handle (or a dummy when only enumerating).
template <typename Self, typename Reg>
MoiMixerModel::Bound traverse_params(Self& self, Reg&& reg) {
    using TMK = ModelConfig::TokenMixerKind;
    const ModelConfig& config = self.config;
    MoiMixerModel::Bound bound;

    auto bind_mixer = [&](const std::string& prefix, auto& p) {
        BoundMoiLayer b;
        b.params = &p;
        for (std::size_t i = 0; i < p.factors.size(); ++i) {
            b.factors.push_back(
                reg(prefix + ".w" + std::to_string(i + 1), ParamKind::encoder_weight,
                    p.factors[i]));
        }
        if (p.use_bias) {
            for (std::size_t i = 0; i < p.biases.size(); ++i) {
                b.biases.push_back(
                    reg(prefix + ".b" + std::to_string(i + 1), ParamKind::encoder_bias,
                        p.biases[i]));
            }
        }
        b.w_out = reg(prefix + ".w_out", ParamKind::encoder_weight, p.w_out);
        if (p.norm_kind == NormKind::layernorm) {
            b.gamma = reg(prefix + ".norm.gamma", ParamKind::mixer_norm, p.gamma);
            b.beta = reg(prefix + ".norm.beta", ParamKind::mixer_norm, p.beta);
        } else if (p.norm_kind == NormKind::layer_scale) {
            b.gamma = reg(prefix + ".norm.scale", ParamKind::mixer_norm, p.gamma);
        }
        return b;
    };

    bound.embedding = reg("embedding", ParamKind::embedding, self.embedding);
    if (config.positional_embedding) {
        bound.positional = reg("positional", ParamKind::embedding, self.positional);
    }
    bound.layers.resize(self.encoder.size());
    for (std::size_t li = 0; li < self.encoder.size(); ++li) {
        auto& layer = self.encoder[li];
        auto& b = bound.layers[li];
        const std::string prefix = "encoder." + std::to_string(li);
        b.norm1_gamma = reg(prefix + ".norm1.gamma", ParamKind::block_norm, layer.norm1_gamma);
        b.norm1_beta = reg(prefix + ".norm1.beta", ParamKind::block_norm, layer.norm1_beta);
        if (config.arch == ModelConfig::Arch::gmlp) {
            b.gmlp.params = &layer.gmlp;
            b.gmlp.w1 = reg(prefix + ".gmlp.w1", ParamKind::encoder_weight, layer.gmlp.w1);
            b.gmlp.w2 = reg(prefix + ".gmlp.w2", ParamKind::encoder_weight, layer.gmlp.w2);
            b.gmlp.w_s = reg(prefix + ".gmlp.w_s", ParamKind::encoder_weight, layer.gmlp.w_s);
            if (layer.gmlp.use_gate_bias) {
                b.gmlp.gate_bias =
                    reg(prefix + ".gmlp.gate_bias", ParamKind::encoder_bias, layer.gmlp.gate_bias);
            }
            b.gmlp.w_o = reg(prefix + ".gmlp.w_o", ParamKind::encoder_weight, layer.gmlp.w_o);
            continue;
        }
        if (config.token_mixer == TMK::linear) {
            b.token_linear =
                reg(prefix + ".token.linear", ParamKind::encoder_weight, layer.token_linear);
        } else {
            b.token_mixer = bind_mixer(prefix + ".token", layer.token_mixer);
        }
        b.norm2_gamma = reg(prefix + ".norm2.gamma", ParamKind::block_norm, layer.norm2_gamma);
        b.norm2_beta = reg(prefix + ".norm2.beta", ParamKind::block_norm, layer.norm2_beta);
        b.channel_mixer = bind_mixer(prefix + ".channel", layer.channel_mixer);
    }
    bound.head_w1 = reg("head.w1", ParamKind::head, self.head_w1);
    bound.head_b1 = reg("head.b1", ParamKind::head, self.head_b1);
    if (!config.tie_head) {
        bound.head_w2 = reg("head.w2", ParamKind::head, self.head_w2);
    }
    bound.head_b2 = reg("head.b2", ParamKind::head, self.head_b2);
    return bound;
}

}  // namespace

MoiMixerModel::Bound MoiMixerModel::bind(Tape& tape) {
    std::vector<BoundParamRef> entries;
    Bound bound = traverse_params(*this, [&](const std::string&, ParamKind, Matrix& m) {
        Tape::Var v = tape.parameter(m);
        entries.push_back({&m, v});
        return v;
    });
    bound.entries = std::move(entries);
    return bound;
}

MoiMixerModel::Bound MoiMixerModel::bind_inference(Tape& tape) const {
    return traverse_params(*this, [&](const std::string&, ParamKind, const Matrix& m) {
        return tape.constant(m);
    });
}

MoiMixerModel::Bound MoiMixerModel::bind_external(const std::vector<Tape::Var>& vars) const {
    std::size_t idx = 0;
    Bound bound = traverse_params(*this, [&](const std::string&, ParamKind, const Matrix&) {
        if (idx >= vars.size()) throw ShapeError("bind_external: too few tape handles");
        return vars[idx++];
    });
    if (idx != vars.size()) throw ShapeError("bind_external: too many tape handles");
    return bound;
}

std::vector<MoiMixerModel::NamedParam> MoiMixerModel::named_params() const {
    std::vector<NamedParam> out;
    traverse_params(*this, [&](const std::string& name, ParamKind kind, const Matrix& m) {
        out.push_back({name, &m, kind});
        return Tape::Var{};
    });
    return out;
}

Matrix MoiMixerModel::embed(const std::vector<int>& ids) const {
    Matrix out(ids.size(), config.hidden);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= embedding.rows) {
            throw InputError("item id " + std::to_string(ids[i]) + " outside [0, " +
                             std::to_string(embedding.rows - 1) + "]");
        }
        for (std::size_t j = 0; j < config.hidden; ++j) {
            double v = embedding.at(static_cast<std::size_t>(ids[i]), j);
            if (config.positional_embedding) v += positional.at(i, j);
            out.at(i, j) = v;
        }
    }
    return out;
}

Tape::Var MoiMixerModel::encoder_block_tape(
    Tape& tape, const BoundEncoderLayer& layer, Tape::Var x,
    const std::function<Tape::Var(Tape::Var)>& maybe_dropout) const {
    if (config.arch == ModelConfig::Arch::gmlp) {
        Tape::Var n = tape.layernorm(x, layer.norm1_gamma, layer.norm1_beta);
        return tape.add(x, maybe_dropout(gmlp_block_tape(tape, layer.gmlp, n)));
    }
    // Token mixing acts on columns: transpose so each channel is a row.
    Tape::Var n1 = tape.layernorm(x, layer.norm1_gamma, layer.norm1_beta);
    Tape::Var mixed;
    if (config.token_mixer == ModelConfig::TokenMixerKind::linear) {
        mixed = tape.transpose(tape.matmul(tape.transpose(n1), layer.token_linear));
    } else {
        mixed = tape.transpose(moi_forward_tape(tape, layer.token_mixer, tape.transpose(n1)));
    }
    Tape::Var y = tape.add(x, maybe_dropout(mixed));
    Tape::Var n2 = tape.layernorm(y, layer.norm2_gamma, layer.norm2_beta);
    Tape::Var c = moi_forward_tape(tape, layer.channel_mixer, n2);
    return tape.add(y, maybe_dropout(c));
}

Matrix MoiMixerModel::encoder_block_forward(std::size_t layer_index, const Matrix& x) const {
    if (layer_index >= encoder.size()) {
        throw InputError("encoder layer " + std::to_string(layer_index) + " out of range");
    }
    if (x.rows != config.seq_len || x.cols != config.hidden) {
        throw ShapeError("encoder block expects " + std::to_string(config.seq_len) + "x" +
                         std::to_string(config.hidden) + ", got " + x.shape_str());
    }
    Tape tape;
    Bound bound = bind_inference(tape);
    auto no_dropout = [](Tape::Var v) { return v; };
    return tape.value(
        encoder_block_tape(tape, bound.layers[layer_index], tape.constant(x), no_dropout));
}

Tape::Var MoiMixerModel::forward_tape(Tape& tape, const Bound& bound,
                                      const std::vector<int>& ids, bool training,
                                      Rng* rng) const {
    if (training && config.dropout > 0.0 && rng == nullptr) {
        throw std::logic_error("training forward needs an rng for dropout");
    }
    const std::vector<int> padded = pad_truncate(ids, config.seq_len, config.pad_id());
    auto maybe_dropout = [&](Tape::Var v) {
        if (!training || config.dropout == 0.0) return v;
        const Matrix& val = tape.value(v);
        return tape.hadamard(v, tape.constant(dropout_mask(val.rows, val.cols,
                                                           config.dropout, *rng)));
    };

    Tape::Var x = tape.gather_rows(bound.embedding, padded);
    if (config.positional_embedding) x = tape.add(x, bound.positional);
    x = maybe_dropout(x);

    for (const BoundEncoderLayer& layer : bound.layers) {
        x = encoder_block_tape(tape, layer, x, maybe_dropout);
    }

    Tape::Var h = tape.gelu(tape.add_row(tape.matmul(x, bound.head_w1), bound.head_b1));
    Tape::Var proj;
    if (config.tie_head) {
        std::vector<int> item_rows(config.vocab);
        std::iota(item_rows.begin(), item_rows.end(), 1);
        proj = tape.transpose(tape.gather_rows(bound.embedding, item_rows));
    } else {
        proj = bound.head_w2;
    }
    return tape.add_row(tape.matmul(h, proj), bound.head_b2);
}

Matrix MoiMixerModel::forward(const std::vector<int>& ids) const {
    Tape tape;
    Bound bound = bind_inference(tape);
    return tape.value(forward_tape(tape, bound, ids, false, nullptr));
}

void MoiMixerModel::save(const std::string& path) const {
    std::ofstream bin(path, std::ios::binary | std::ios::trunc);
    if (!bin) throw IoError("cannot write checkpoint to " + path);
    std::ofstream manifest(path + ".manifest", std::ios::trunc);
    if (!manifest) throw IoError("cannot write manifest to " + path + ".manifest");

    manifest << "# layers = " << config.layers << "\n";
    manifest << "# hidden = " << config.hidden << "\n";
    manifest << "# token_hidden = " << config.token_hidden_dim() << "\n";
    manifest << "# channel_hidden = " << config.channel_hidden_dim() << "\n";
    manifest << "# token_order = " << config.token_order << "\n";
    manifest << "# channel_order = " << config.channel_order << "\n";
    manifest << "# seq_len = " << config.seq_len << "\n";
    manifest << "# vocab = " << config.vocab << "\n";
    manifest << "# dropout = " << config.dropout << "\n";
    manifest << "# positional_embedding = " << (config.positional_embedding ? 1 : 0) << "\n";
    manifest << "# token_mixer = " << to_string(config.token_mixer) << "\n";
    manifest << "# arch = " << to_string(config.arch) << "\n";
    manifest << "# norm_kind = " << to_string(config.norm_kind) << "\n";
    manifest << "# norm_location = " << to_string(config.norm_location) << "\n";
    manifest << "# use_bias = " << (config.use_bias ? 1 : 0) << "\n";
    manifest << "# tie_head = " << (config.tie_head ? 1 : 0) << "\n";
    manifest << "# activation = " << to_string(config.activation) << "\n";

    std::size_t offset = 0;
    for (const NamedParam& p : named_params()) {
        manifest << p.name << "\t" << p.value->rows << "\t" << p.value->cols << "\t"
                 << offset << "\n";
        bin.write(reinterpret_cast<const char*>(p.value->data.data()),
                  static_cast<std::streamsize>(p.value->size() * sizeof(double)));
        offset += p.value->size() * sizeof(double);
    }
    if (!bin || !manifest) throw IoError("short write while saving checkpoint " + path);
}

MoiMixerModel MoiMixerModel::load(const std::string& path) {
    std::ifstream manifest(path + ".manifest");
    if (!manifest) throw IoError("cannot read manifest " + path + ".manifest");
    std::unordered_map<std::string, std::string> kv;
    struct TensorLine {
        std::string name;
        std::size_t rows, cols, offset;
    };
    std::vector<TensorLine> tensors;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::string body = line.substr(1);
            const std::size_t eq = body.find('=');
            if (eq == std::string::npos) continue;
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t");
                const auto e = s.find_last_not_of(" \t");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            kv[trim(body.substr(0, eq))] = trim(body.substr(eq + 1));
            continue;
        }
        std::istringstream ss(line);
        TensorLine t;
        if (!(ss >> t.name >> t.rows >> t.cols >> t.offset)) {
            throw IoError("malformed manifest line: " + line);
        }
        tensors.push_back(t);
    }

    auto need = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw IoError("manifest missing config key '" + key + "'");
        return it->second;
    };
    ModelConfig config;
    config.layers = std::stoul(need("layers"));
    config.hidden = std::stoul(need("hidden"));
    config.token_hidden = std::stoul(need("token_hidden"));
    config.channel_hidden = std::stoul(need("channel_hidden"));
    config.token_order = std::stoul(need("token_order"));
    config.channel_order = std::stoul(need("channel_order"));
    config.seq_len = std::stoul(need("seq_len"));
    config.vocab = std::stoul(need("vocab"));
    config.dropout = std::stod(need("dropout"));
    config.positional_embedding = need("positional_embedding") == "1";
    config.token_mixer = parse_token_mixer(need("token_mixer"));
    config.arch = parse_arch(need("arch"));
    config.norm_kind = parse_norm_kind(need("norm_kind"));
    config.norm_location = parse_norm_location(need("norm_location"));
    config.use_bias = need("use_bias") == "1";
    config.tie_head = need("tie_head") == "1";
    config.activation = parse_activation(need("activation"));

    MoiMixerModel model = init(config, 0);
    std::unordered_map<std::string, Matrix*> by_name;
    traverse_params(model, [&](const std::string& name, ParamKind, Matrix& m) {
        by_name[name] = &m;
        return Tape::Var{};
    });

    std::ifstream bin(path, std::ios::binary);
    if (!bin) throw IoError("cannot read checkpoint " + path);
    std::size_t matched = 0;
    for (const TensorLine& t : tensors) {
        auto it = by_name.find(t.name);
        if (it == by_name.end()) {
            throw IoError("checkpoint tensor '" + t.name + "' not present in model");
        }
        Matrix& m = *it->second;
        if (m.rows != t.rows || m.cols != t.cols) {
            throw IoError("checkpoint tensor '" + t.name + "' has shape " +
                          std::to_string(t.rows) + "x" + std::to_string(t.cols) +
                          ", model expects " + m.shape_str());
        }
        bin.seekg(static_cast<std::streamoff>(t.offset));
        bin.read(reinterpret_cast<char*>(m.data.data()),
                 static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (!bin) throw IoError("short read for tensor '" + t.name + "'");
        ++matched;
    }
    if (matched != by_name.size()) {
        throw IoError("checkpoint provides " + std::to_string(matched) + " tensors, model has " +
                      std::to_string(by_name.size()));
    }
    return model;
}

}  // namespace moi
