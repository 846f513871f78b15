#include "moi/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace moi {

const char* const kFlopsConventionNote =
    "# flops convention: 1 multiply-add = 2 flops; elementwise ops 1 per element; "
    "layernorm 5 per element; one sequence, batch 1";

double RankEntry::hit_at(std::size_t n) const {
    // Ground truth occupies slots greater+1 .. greater+ties+1 with equal
    // probability; count how many of those land within the top n.
    const double slots = static_cast<double>(ties + 1);
    const double within =
        std::clamp(static_cast<double>(n) - static_cast<double>(strictly_greater), 0.0, slots);
    return within / slots;
}

double RankEntry::gain_at(std::size_t n) const {
    const std::size_t first = strictly_greater + 1;
    const std::size_t last = std::min(strictly_greater + ties + 1, n);
    double g = 0.0;
    for (std::size_t r = first; r <= last; ++r) {
        g += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    }
    return g / static_cast<double>(ties + 1);
}

namespace {

RankEntry rank_entry_from_scores(const std::vector<double>& scores) {
    if (scores.size() < 2) {
        throw InputError("rank_ground_truth: need the ground truth plus >= 1 negative");
    }
    RankEntry e;
    e.candidates = scores.size();
    const double gt = scores[0];
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > gt) {
            ++e.strictly_greater;
        } else if (scores[i] == gt) {
            ++e.ties;
        }
    }
    e.expected_rank = 1.0 + static_cast<double>(e.strictly_greater) +
                      static_cast<double>(e.ties) / 2.0;
    return e;
}

}  // namespace

double rank_ground_truth(const std::vector<double>& scores) {
    return rank_entry_from_scores(scores).expected_rank;
}

double hr_at_n(const std::vector<double>& ranks, std::size_t n) {
    if (ranks.empty()) throw InputError("hr_at_n: empty rank list");
    std::size_t hits = 0;
    for (double r : ranks) {
        if (r < 1.0) throw InputError("hr_at_n: ranks are 1-based");
        if (r <= static_cast<double>(n)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double ndcg_at_n(const std::vector<double>& ranks, std::size_t n) {
    if (ranks.empty()) throw InputError("ndcg_at_n: empty rank list");
    double total = 0.0;
    for (double r : ranks) {
        if (r < 1.0) throw InputError("ndcg_at_n: ranks are 1-based");
        if (r <= static_cast<double>(n)) total += 1.0 / std::log2(r + 1.0);
    }
    return total / static_cast<double>(ranks.size());
}

void EvalReport::check_invariants() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(hr1) || !in_unit(hr10) || !in_unit(ndcg10)) {
        throw InputError("metrics must lie in [0, 1]");
    }
    if (hr1 > hr10 + 1e-12) throw InputError("HR@1 exceeds HR@10");
    if (ndcg10 > hr10 + 1e-12) throw InputError("NDCG@10 exceeds HR@10");
}

std::string report_to_tsv(const EvalReport& report) {
    char buf[256];
    std::string out;
    out += kFlopsConventionNote;
    out += "\n";
    std::snprintf(buf, sizeof(buf), "hr@1\t%.6f\n", report.hr1);
    out += buf;
    std::snprintf(buf, sizeof(buf), "hr@10\t%.6f\n", report.hr10);
    out += buf;
    std::snprintf(buf, sizeof(buf), "ndcg@10\t%.6f\n", report.ndcg10);
    out += buf;
    std::snprintf(buf, sizeof(buf), "params\t%lld\n", report.params);
    out += buf;
    std::snprintf(buf, sizeof(buf), "flops\t%lld\n", report.flops);
    out += buf;
    std::snprintf(buf, sizeof(buf), "users\t%zu\n", report.ranks.size());
    out += buf;
    return out;
}

std::string report_to_table(const EvalReport& report) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "metric      value\n"
                  "HR@1        %.4f\n"
                  "HR@10       %.4f\n"
                  "NDCG@10     %.4f\n"
                  "params      %lld (%.2fM)\n"
                  "flops       %lld (%.2fM)\n"
                  "users       %zu\n",
                  report.hr1, report.hr10, report.ndcg10, report.params,
                  static_cast<double>(report.params) / 1e6, report.flops,
                  static_cast<double>(report.flops) / 1e6, report.ranks.size());
    return std::string(buf);
}

namespace {

std::uint64_t per_user_seed(std::uint64_t seed, std::size_t user) {
    // splitmix-style mix keeps per-user streams independent of loop order.
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (user + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

EvalReport aggregate(std::vector<RankEntry> entries) {
    EvalReport report;
    double hr1 = 0.0, hr10 = 0.0, ndcg10 = 0.0;
    for (const RankEntry& e : entries) {
        hr1 += e.hit_at(1);
        hr10 += e.hit_at(10);
        ndcg10 += e.gain_at(10);
    }
    const double n = static_cast<double>(entries.size());
    report.hr1 = hr1 / n;
    report.hr10 = hr10 / n;
    report.ndcg10 = ndcg10 / n;
    report.ranks = std::move(entries);
    report.check_invariants();
    return report;
}

}  // namespace

EvalReport evaluate_model(const MoiMixerModel& model, const InteractionDataset& data,
                          std::uint64_t seed, EvalSplit split, std::size_t negatives) {
    data.validate();
    if (data.user_count() == 0) throw InputError("evaluate_model: dataset is empty");
    const std::size_t users = data.user_count();
    std::vector<RankEntry> entries(users);

    const std::int64_t user_count = static_cast<std::int64_t>(users);
#pragma omp parallel for schedule(static)
    for (std::int64_t ui = 0; ui < user_count; ++ui) {
        const std::size_t user = static_cast<std::size_t>(ui);
        std::vector<int> input = data.train[user];
        int ground_truth;
        if (split == EvalSplit::test) {
            input.push_back(data.valid[user]);
            ground_truth = data.test[user];
        } else {
            ground_truth = data.valid[user];
        }
        input.push_back(model.config.mask_id());

        const Matrix logits = model.forward(input);
        const std::size_t last = logits.rows - 1;

        const std::vector<int> negs =
            sample_negatives(data, user, ground_truth, negatives, per_user_seed(seed, user));
        std::vector<double> scores;
        scores.reserve(negs.size() + 1);
        scores.push_back(logits.at(last, static_cast<std::size_t>(ground_truth - 1)));
        for (int item : negs) {
            scores.push_back(logits.at(last, static_cast<std::size_t>(item - 1)));
        }
        RankEntry e = rank_entry_from_scores(scores);
        e.user = user;
        entries[user] = e;
    }

    EvalReport report = aggregate(std::move(entries));
    report.params = count_params(model).encoder;
    report.flops = count_flops(model.config, model.config.seq_len);
    return report;
}

EvalReport pop_baseline(const InteractionDataset& data, std::uint64_t seed,
                        EvalSplit split, std::size_t negatives) {
    data.validate();
    if (data.user_count() == 0) throw InputError("pop_baseline: dataset is empty");
    std::vector<RankEntry> entries(data.user_count());
    for (std::size_t user = 0; user < data.user_count(); ++user) {
        const int ground_truth =
            split == EvalSplit::test ? data.test[user] : data.valid[user];
        const std::vector<int> negs =
            sample_negatives(data, user, ground_truth, negatives, per_user_seed(seed, user));
        std::vector<double> scores;
        scores.reserve(negs.size() + 1);
        scores.push_back(static_cast<double>(data.popularity[ground_truth]));
        for (int item : negs) {
            scores.push_back(static_cast<double>(data.popularity[item]));
        }
        RankEntry e = rank_entry_from_scores(scores);
        e.user = user;
        entries[user] = e;
    }
    return aggregate(std::move(entries));
}

ParamCountReport count_params(const MoiMixerModel& model) {
    ParamCountReport report;
    for (const MoiMixerModel::NamedParam& p : model.named_params()) {
        const long long n = static_cast<long long>(p.value->size());
        report.total += n;
        switch (p.kind) {
            case ParamKind::encoder_weight:
            case ParamKind::block_norm:
                report.encoder += n;
                report.encoder_all += n;
                break;
            case ParamKind::encoder_bias:
            case ParamKind::mixer_norm:
                report.encoder_all += n;
                break;
            case ParamKind::embedding:
            case ParamKind::head:
                break;
        }
    }
    return report;
}

namespace {

long long norm_flops(NormKind kind, long long elements) {
    switch (kind) {
        case NormKind::layernorm:
            return 5 * elements;
        case NormKind::none:
            return 0;
        case NormKind::l2:
            return 3 * elements;
        case NormKind::layer_scale:
            return elements;
    }
    return 0;
}

// One interaction layer applied to `rows` instances of width d_in.
long long moi_layer_flops(const ModelConfig& config, std::size_t order, long long rows,
                          long long d_in, long long hidden) {
    long long total = 0;
    const long long k = static_cast<long long>(order);
    total += k * 2 * rows * d_in * hidden;                       // factor projections
    if (config.use_bias) total += k * rows * hidden;             // bias adds
    if (config.activation == Activation::gelu) total += k * rows * hidden;
    total += (k - 1) * rows * hidden;                            // hadamard chain
    if (order >= 2) total += norm_flops(config.norm_kind, rows * hidden);
    total += 2 * rows * hidden * d_in;                           // output projection
    return total;
}

}  // namespace

long long gmlp_block_flops(std::size_t s, std::size_t channels, std::size_t hidden) {
    const long long sl = static_cast<long long>(s);
    const long long c = static_cast<long long>(channels);
    const long long h = static_cast<long long>(hidden);
    long long total = 0;
    total += 2 * 2 * sl * c * h;  // the two channel projections
    total += 2 * sl * h;          // activations
    total += 2 * sl * sl * h;     // spatial gate, quadratic in s
    total += sl * h;              // gate bias
    total += sl * h;              // gating hadamard
    total += 2 * sl * h * c;      // output projection
    return total;
}

long long count_flops(const ModelConfig& config, std::size_t s) {
    const long long sl = static_cast<long long>(s);
    const long long dh = static_cast<long long>(config.hidden);
    const long long ds = static_cast<long long>(config.token_hidden_dim());
    const long long dc = static_cast<long long>(config.channel_hidden_dim());
    const long long v = static_cast<long long>(config.vocab);

    long long total = 0;
    if (config.positional_embedding) total += sl * dh;
    for (std::size_t layer = 0; layer < config.layers; ++layer) {
        if (config.arch == ModelConfig::Arch::gmlp) {
            total += 5 * sl * dh;  // pre-norm
            total += gmlp_block_flops(s, config.hidden, config.channel_hidden_dim());
            total += sl * dh;      // residual
            continue;
        }
        total += 5 * sl * dh;  // pre-norm, token mixing
        if (config.token_mixer == ModelConfig::TokenMixerKind::linear) {
            total += 2 * dh * sl * sl;
        } else {
            total += moi_layer_flops(config, config.token_order, dh, sl, ds);
        }
        total += sl * dh;      // residual
        total += 5 * sl * dh;  // pre-norm, channel mixing
        total += moi_layer_flops(config, config.channel_order, sl, dh, dc);
        total += sl * dh;      // residual
    }
    // Prediction head: d_h -> d_h with GELU, then projection onto the items.
    total += 2 * sl * dh * dh + sl * dh + sl * dh;
    total += 2 * sl * dh * v + sl * v;
    return total;
}

GridResult grid_experiment(const InteractionDataset& data, ModelConfig base,
                           const std::vector<std::size_t>& token_orders,
                           const std::vector<std::size_t>& channel_orders,
                           const TrainConfig& train_config) {
    for (std::size_t k : token_orders) {
        if (k < 1 || k > 4) throw ConfigError("token order grid must stay within [1, 4]");
    }
    for (std::size_t k : channel_orders) {
        if (k < 1 || k > 4) throw ConfigError("channel order grid must stay within [1, 4]");
    }
    GridResult grid;
    grid.token_orders = token_orders;
    grid.channel_orders = channel_orders;
    grid.ndcg10.assign(token_orders.size(),
                       std::vector<double>(channel_orders.size(), 0.0));
    grid.params.assign(token_orders.size(),
                       std::vector<long long>(channel_orders.size(), 0));

    for (std::size_t ti = 0; ti < token_orders.size(); ++ti) {
        for (std::size_t ci = 0; ci < channel_orders.size(); ++ci) {
            ModelConfig config = base;
            config.token_order = token_orders[ti];
            config.channel_order = channel_orders[ci];
            config.channel_hidden = 0;  // re-derive 6*d_h/(k_c+1) per cell
            config.vocab = data.item_count;
            MoiMixerModel model = MoiMixerModel::init(config, train_config.seed);
            train(model, data, train_config);
            EvalReport report = evaluate_model(model, data, train_config.seed);
            grid.ndcg10[ti][ci] = report.ndcg10;
            grid.params[ti][ci] = report.params;
        }
    }
    return grid;
}

std::string grid_to_tsv(const GridResult& grid) {
    std::ostringstream out;
    out << "k_s\\k_c";
    for (std::size_t kc : grid.channel_orders) out << "\t" << kc;
    out << "\n";
    char buf[32];
    for (std::size_t ti = 0; ti < grid.token_orders.size(); ++ti) {
        out << grid.token_orders[ti];
        for (std::size_t ci = 0; ci < grid.channel_orders.size(); ++ci) {
            std::snprintf(buf, sizeof(buf), "\t%.4f", grid.ndcg10[ti][ci]);
            out << buf;
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace moi
