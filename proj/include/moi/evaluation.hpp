#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moi/dataset.hpp"
#include "moi/model.hpp"
#include "moi/training.hpp"

namespace moi {

/// Per-user outcome of ranking the ground truth among the candidates. Tied
/// scores are resolved in expectation over a uniform random tie-break, so the
/// reported rank is 1 + greater + ties/2 and hit/gain contributions average
/// over the tied slots.
struct RankEntry {
    std::size_t user = 0;
    std::size_t strictly_greater = 0;  // negatives scoring above the ground truth
    std::size_t ties = 0;              // negatives scoring exactly equal
    std::size_t candidates = 0;        // ground truth + negatives
    double expected_rank = 0.0;

    double hit_at(std::size_t n) const;
    double gain_at(std::size_t n) const;
};

// Expected 1-based rank of scores[0] (the ground truth) among all candidates.
double rank_ground_truth(const std::vector<double>& scores);

// Fraction of ranks <= n.
double hr_at_n(const std::vector<double>& ranks, std::size_t n);

// Mean of 1/log2(rank + 1) for ranks <= n, zero otherwise (single relevant
// item, so the ideal DCG is 1).
double ndcg_at_n(const std::vector<double>& ranks, std::size_t n);

struct EvalReport {
    double hr1 = 0.0;
    double hr10 = 0.0;
    double ndcg10 = 0.0;
    long long params = 0;
    long long flops = 0;
    std::vector<RankEntry> ranks;

    void check_invariants() const;  // 0 <= ndcg10 <= hr10 <= 1, hr1 <= hr10
};

std::string report_to_tsv(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

enum class EvalSplit { validation, test };

// Leave-one-out evaluation: per user, the ground truth is paired with
// popularity-sampled negatives and scored by the logits at the final (masked)
// position. Per-user work runs in parallel with a fixed aggregation order.
EvalReport evaluate_model(const MoiMixerModel& model, const InteractionDataset& data,
                          std::uint64_t seed, EvalSplit split = EvalSplit::test,
                          std::size_t negatives = 100);

// Scores every candidate by its training popularity count.
EvalReport pop_baseline(const InteractionDataset& data, std::uint64_t seed,
                        EvalSplit split = EvalSplit::test, std::size_t negatives = 100);

/// Encoder parameter counts. `encoder` is the headline figure: weight
/// matrices plus the per-block normalization parameters, matching the common
/// encoder accounting; bias vectors and mixer-internal normalization
/// parameters appear only in `encoder_all`.
struct ParamCountReport {
    long long encoder = 0;
    long long encoder_all = 0;
    long long total = 0;  // including embedding and head

    double encoder_millions() const { return static_cast<double>(encoder) / 1e6; }
};

ParamCountReport count_params(const MoiMixerModel& model);

// Analytic forward-pass FLOP count for one sequence of length s under the
// documented convention: one multiply-add = 2 FLOPs, elementwise ops one per
// element, layer normalization five per element.
long long count_flops(const ModelConfig& config, std::size_t s);
long long gmlp_block_flops(std::size_t s, std::size_t channels, std::size_t hidden);

extern const char* const kFlopsConventionNote;

struct GridResult {
    std::vector<std::size_t> token_orders;
    std::vector<std::size_t> channel_orders;
    std::vector<std::vector<double>> ndcg10;      // [token][channel]
    std::vector<std::vector<long long>> params;   // same layout
};

// Trains one model per (token order, channel order) cell and evaluates it on
// the test split; channel hidden dims re-derive per cell.
GridResult grid_experiment(const InteractionDataset& data, ModelConfig base,
                           const std::vector<std::size_t>& token_orders,
                           const std::vector<std::size_t>& channel_orders,
                           const TrainConfig& train_config);

std::string grid_to_tsv(const GridResult& grid);

}  // namespace moi
