#include "moi/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace moi {

namespace {

std::string trim(const std::string& s) {
    const std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size() || v < 0) throw std::invalid_argument(value);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' needs a non-negative integer, got '" + value + "'");
    }
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' needs a number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("key '" + key + "' needs true/false, got '" + value + "'");
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
    if (key == "layers") model.layers = parse_size(key, value);
    else if (key == "hidden_dim") model.hidden = parse_size(key, value);
    else if (key == "token_hidden_dim") model.token_hidden = parse_size(key, value);
    else if (key == "channel_hidden_dim") model.channel_hidden = parse_size(key, value);
    else if (key == "token_order") model.token_order = parse_size(key, value);
    else if (key == "channel_order") model.channel_order = parse_size(key, value);
    else if (key == "seq_len") model.seq_len = parse_size(key, value);
    else if (key == "dropout") model.dropout = parse_real(key, value);
    else if (key == "positional_embedding") model.positional_embedding = parse_bool(key, value);
    else if (key == "token_mixer") model.token_mixer = parse_token_mixer(value);
    else if (key == "arch") model.arch = parse_arch(value);
    else if (key == "norm_kind") model.norm_kind = parse_norm_kind(value);
    else if (key == "norm_location") model.norm_location = parse_norm_location(value);
    else if (key == "use_bias") model.use_bias = parse_bool(key, value);
    else if (key == "tie_head") model.tie_head = parse_bool(key, value);
    else if (key == "activation") model.activation = parse_activation(value);
    else if (key == "lr") train.lr = parse_real(key, value);
    else if (key == "weight_decay") train.weight_decay = parse_real(key, value);
    else if (key == "epochs") train.epochs = parse_size(key, value);
    else if (key == "batch_size") train.batch_size = parse_size(key, value);
    else if (key == "mask_prob") train.mask_prob = parse_real(key, value);
    else if (key == "data_dir") data_dir = value;
    else if (key == "out_dir") out_dir = value;
    else throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const std::size_t eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + body + "'");
        }
        apply(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    }
}

std::string RunConfig::resolved_text() const {
    std::ostringstream out;
    char buf[64];
    out << "activation = " << to_string(model.activation) << "\n";
    out << "arch = " << to_string(model.arch) << "\n";
    out << "batch_size = " << train.batch_size << "\n";
    out << "channel_hidden_dim = " << model.channel_hidden_dim() << "\n";
    out << "channel_order = " << model.channel_order << "\n";
    out << "data_dir = " << data_dir << "\n";
    std::snprintf(buf, sizeof(buf), "%g", model.dropout);
    out << "dropout = " << buf << "\n";
    out << "epochs = " << train.epochs << "\n";
    out << "hidden_dim = " << model.hidden << "\n";
    out << "layers = " << model.layers << "\n";
    std::snprintf(buf, sizeof(buf), "%g", train.lr);
    out << "lr = " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%g", train.mask_prob);
    out << "mask_prob = " << buf << "\n";
    out << "norm_kind = " << to_string(model.norm_kind) << "\n";
    out << "norm_location = " << to_string(model.norm_location) << "\n";
    out << "out_dir = " << out_dir << "\n";
    out << "positional_embedding = " << (model.positional_embedding ? "true" : "false") << "\n";
    out << "seq_len = " << model.seq_len << "\n";
    out << "tie_head = " << (model.tie_head ? "true" : "false") << "\n";
    out << "token_hidden_dim = " << model.token_hidden_dim() << "\n";
    out << "token_mixer = " << to_string(model.token_mixer) << "\n";
    out << "token_order = " << model.token_order << "\n";
    out << "use_bias = " << (model.use_bias ? "true" : "false") << "\n";
    std::snprintf(buf, sizeof(buf), "%g", train.weight_decay);
    out << "weight_decay = " << buf << "\n";
    return out.str();
}

}  // namespace moi
