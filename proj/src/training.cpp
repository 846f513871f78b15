#include "moi/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace moi {

void TrainConfig::validate() const {
    if (mask_prob <= 0.0 || mask_prob >= 1.0) {
        throw ConfigError("mask_prob must lie in (0, 1), got " + std::to_string(mask_prob));
    }
    if (lr <= 0.0) throw ConfigError("lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

AdamState AdamState::init(const std::vector<Matrix*>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Matrix* p : params) {
        s.m.emplace_back(p->rows, p->cols);
        s.v.emplace_back(p->rows, p->cols);
    }
    return s;
}

MaskedSequence mask_sequence(const std::vector<int>& ids, double rho, Rng& rng,
                             int mask_id, int pad_id) {
    std::vector<std::size_t> non_pad;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] != pad_id) non_pad.push_back(i);
    }
    if (non_pad.empty()) {
        throw InputError("mask_sequence: sequence has no non-pad items");
    }
    MaskedSequence out;
    out.masked_ids = ids;
    for (std::size_t i : non_pad) {
        if (rng.uniform() < rho) {
            out.positions.push_back(i);
            out.targets.push_back(ids[i]);
            out.masked_ids[i] = mask_id;
        }
    }
    if (out.positions.empty()) {
        const std::size_t i = non_pad[rng.integer(non_pad.size())];
        out.positions.push_back(i);
        out.targets.push_back(ids[i]);
        out.masked_ids[i] = mask_id;
    }
    return out;
}

MaskedSequence mask_sequence(const std::vector<int>& ids, double rho, std::uint64_t seed,
                             int mask_id, int pad_id) {
    Rng rng(seed);
    return mask_sequence(ids, rho, rng, mask_id, pad_id);
}

double mlm_loss(const Matrix& logits, const std::vector<std::size_t>& positions,
                const std::vector<int>& target_classes) {
    if (positions.empty() || positions.size() != target_classes.size()) {
        throw InputError("mlm_loss: need at least one (position, target) pair");
    }
    double loss = 0.0;
    for (std::size_t m = 0; m < positions.size(); ++m) {
        const std::size_t p = positions[m];
        if (p >= logits.rows) {
            throw InputError("mlm_loss: position " + std::to_string(p) + " outside " +
                             std::to_string(logits.rows) + " rows");
        }
        const int t = target_classes[m];
        if (t < 0 || static_cast<std::size_t>(t) >= logits.cols) {
            throw InputError("mlm_loss: target class " + std::to_string(t) + " outside " +
                             std::to_string(logits.cols) + " classes");
        }
        double mx = logits.at(p, 0);
        for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, logits.at(p, j));
        double z = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) z += std::exp(logits.at(p, j) - mx);
        loss += mx + std::log(z) - logits.at(p, static_cast<std::size_t>(t));
    }
    return loss / static_cast<double>(positions.size());
}

void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state, double lr, double weight_decay) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw ShapeError("adam_step: parameter/gradient/state counts disagree");
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i];
        const Matrix& g = *grads[i];
        if (!p.same_shape(g)) {
            throw ShapeError("adam_step: param " + p.shape_str() + " vs grad " + g.shape_str());
        }
        Matrix& m = state.m[i];
        Matrix& v = state.v[i];
        for (std::size_t e = 0; e < p.size(); ++e) {
            if (weight_decay != 0.0) p.data[e] -= lr * weight_decay * p.data[e];
            m.data[e] = state.beta1 * m.data[e] + (1.0 - state.beta1) * g.data[e];
            v.data[e] = state.beta2 * v.data[e] + (1.0 - state.beta2) * g.data[e] * g.data[e];
            const double m_hat = m.data[e] / bc1;
            const double v_hat = v.data[e] / bc2;
            p.data[e] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr_max) {
    if (epoch >= total_epochs) {
        throw ConfigError("cosine_lr: epoch " + std::to_string(epoch) + " not below total " +
                          std::to_string(total_epochs));
    }
    constexpr double pi = 3.14159265358979323846;
    return lr_max * 0.5 *
           (1.0 + std::cos(pi * static_cast<double>(epoch) / static_cast<double>(total_epochs)));
}

std::string format_epoch_line(const EpochLog& entry) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%zu\t%.10f\t%.10f", entry.epoch, entry.loss, entry.lr);
    return std::string(buf);
}

std::vector<EpochLog> train(MoiMixerModel& model, const InteractionDataset& data,
                            const TrainConfig& config, std::ostream* log,
                            const std::string& checkpoint_path) {
    config.validate();
    if (data.user_count() == 0) throw InputError("train: dataset is empty");
    if (model.config.vocab != data.item_count) {
        throw ConfigError("model vocab " + std::to_string(model.config.vocab) +
                          " does not match dataset item count " +
                          std::to_string(data.item_count));
    }

    Rng rng(config.seed);
    std::vector<std::size_t> order(data.user_count());
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochLog> history;
    history.reserve(config.epochs);
    AdamState state;
    bool state_ready = false;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, config.epochs, config.lr);
        // Fisher-Yates on the shared stream keeps run order reproducible.
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.integer(i)]);
        }

        double loss_sum = 0.0;
        std::size_t sequences = 0;

        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, order.size());
            Tape tape;
            MoiMixerModel::Bound bound = model.bind(tape);
            Tape::Var batch_loss;
            bool first = true;
            for (std::size_t bi = start; bi < end; ++bi) {
                const std::size_t user = order[bi];
                const std::vector<int> padded =
                    pad_truncate(data.train[user], model.config.seq_len, model.config.pad_id());
                MaskedSequence ms = mask_sequence(padded, config.mask_prob, rng,
                                                  model.config.mask_id(), model.config.pad_id());
                std::vector<int> classes(ms.targets.size());
                for (std::size_t t = 0; t < ms.targets.size(); ++t) {
                    classes[t] = ms.targets[t] - 1;
                }
                Tape::Var logits =
                    model.forward_tape(tape, bound, ms.masked_ids, true, &rng);
                Tape::Var seq_loss =
                    tape.masked_softmax_cross_entropy(logits, ms.positions, classes);
                batch_loss = first ? seq_loss : tape.add(batch_loss, seq_loss);
                first = false;
            }
            const std::size_t batch_count = end - start;
            batch_loss = tape.scale(batch_loss, 1.0 / static_cast<double>(batch_count));
            tape.backward(batch_loss);

            std::vector<Matrix*> params;
            std::vector<const Matrix*> grads;
            params.reserve(bound.entries.size());
            grads.reserve(bound.entries.size());
            for (const MoiMixerModel::BoundParamRef& e : bound.entries) {
                params.push_back(e.value);
                grads.push_back(&tape.grad(e.var));
            }
            if (!state_ready) {
                state = AdamState::init(params);
                state_ready = true;
            }
            adam_step(params, grads, state, lr, config.weight_decay);

            loss_sum += tape.value(batch_loss).at(0, 0) * static_cast<double>(batch_count);
            sequences += batch_count;
        }

        EpochLog entry{epoch, loss_sum / static_cast<double>(sequences), lr};
        history.push_back(entry);
        if (log) (*log) << format_epoch_line(entry) << "\n";
    }

    if (!checkpoint_path.empty()) model.save(checkpoint_path);
    return history;
}

}  // namespace moi
