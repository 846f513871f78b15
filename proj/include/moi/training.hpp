#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "moi/dataset.hpp"
#include "moi/model.hpp"

namespace moi {

struct TrainConfig {
    double lr = 1e-3;
    double weight_decay = 1e-4;
    std::size_t epochs = 200;
    std::size_t batch_size = 256;
    double mask_prob = 0.2;  // fraction of non-pad positions replaced by the mask token
    std::uint64_t seed = 0;

    void validate() const;
};

/// Adam moment accumulators, one pair per parameter in bind order.
struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    long long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState init(const std::vector<Matrix*>& params);
};

struct MaskedSequence {
    std::vector<int> masked_ids;           // input with selected positions masked
    std::vector<std::size_t> positions;    // masked positions
    std::vector<int> targets;              // original item ids at those positions
};

// Each non-pad position is masked independently with probability rho; when the
// draw selects none, one non-pad position is forced. A sequence with no
// non-pad items is an input error.
MaskedSequence mask_sequence(const std::vector<int>& ids, double rho, Rng& rng,
                             int mask_id, int pad_id = 0);
MaskedSequence mask_sequence(const std::vector<int>& ids, double rho, std::uint64_t seed,
                             int mask_id, int pad_id = 0);

// Mean softmax cross-entropy over the masked positions only. `target_classes`
// index logits columns (item id - 1 for an id-based caller).
double mlm_loss(const Matrix& logits, const std::vector<std::size_t>& positions,
                const std::vector<int>& target_classes);

// Decoupled weight decay (param -= lr*wd*param) followed by a bias-corrected
// Adam update.
void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state, double lr, double weight_decay);

// lr_max * 0.5 * (1 + cos(pi * epoch / total_epochs)), no warmup.
double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr_max);

struct EpochLog {
    std::size_t epoch;
    double loss;
    double lr;
};

// Shuffled mini-batches per epoch, seeded and fully deterministic; appends
// `epoch<TAB>loss<TAB>lr` per epoch to `log` when given, and writes the final
// checkpoint to `checkpoint_path` when non-empty.
std::vector<EpochLog> train(MoiMixerModel& model, const InteractionDataset& data,
                            const TrainConfig& config, std::ostream* log = nullptr,
                            const std::string& checkpoint_path = "");

std::string format_epoch_line(const EpochLog& entry);

}  // namespace moi
