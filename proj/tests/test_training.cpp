#include <doctest.h>

#include <cmath>
#include <sstream>

#include "moi/evaluation.hpp"
#include "moi/training.hpp"

using moi::Matrix;
using moi::TrainConfig;

namespace {

moi::ModelConfig smoke_model_config(std::size_t vocab, std::size_t seq) {
    moi::ModelConfig c;
    c.layers = 1;
    c.hidden = 32;
    c.seq_len = seq;
    c.vocab = vocab;
    c.token_order = 1;
    c.channel_order = 2;
    c.dropout = 0.0;
    return c;
}

}  // namespace

TEST_CASE("mask_sequence") {
    const std::vector<int> ids = {0, 0, 3, 7, 9, 2};
    const int mask_id = 99;

    SUBCASE("vanishing rate still forces exactly one mask") {
        const moi::MaskedSequence ms = moi::mask_sequence(ids, 1e-12, 42, mask_id);
        REQUIRE(ms.positions.size() == 1);
        CHECK(ids[ms.positions[0]] != 0);
        CHECK(ms.masked_ids[ms.positions[0]] == mask_id);
    }
    SUBCASE("rate near one masks almost everything") {
        const moi::MaskedSequence ms = moi::mask_sequence(ids, 0.999, 42, mask_id);
        CHECK(ms.positions.size() == 4);  // every non-pad position
        for (std::size_t i = 0; i < ms.positions.size(); ++i) {
            CHECK(ms.targets[i] == ids[ms.positions[i]]);
        }
    }
    SUBCASE("pad positions are never masked") {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            const moi::MaskedSequence ms = moi::mask_sequence(ids, 0.5, seed, mask_id);
            CHECK(ms.masked_ids[0] == 0);
            CHECK(ms.masked_ids[1] == 0);
        }
    }
    SUBCASE("masked fraction concentrates near the rate") {
        std::vector<int> longseq(100000, 1);
        const moi::MaskedSequence ms = moi::mask_sequence(longseq, 0.2, 7, mask_id);
        const double fraction =
            static_cast<double>(ms.positions.size()) / static_cast<double>(longseq.size());
        CHECK(fraction > 0.19);
        CHECK(fraction < 0.21);
    }
    SUBCASE("all-pad input is rejected") {
        CHECK_THROWS_AS(moi::mask_sequence({0, 0, 0}, 0.5, 1, mask_id), moi::InputError);
    }
}

TEST_CASE("mlm_loss") {
    SUBCASE("uniform logits give ln V") {
        const std::size_t v = 23;
        const Matrix logits(4, v, 0.7);
        const double loss = moi::mlm_loss(logits, {0, 2}, {5, 11});
        CHECK(loss == doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-12));
    }
    SUBCASE("huge correct-class margin drives the loss to zero") {
        Matrix logits(2, 6, 0.0);
        logits.at(1, 3) = 50.0;
        CHECK(moi::mlm_loss(logits, {1}, {3}) < 1e-15);
    }
    SUBCASE("random case matches an independent log-sum-exp computation") {
        moi::Rng rng(3);
        Matrix logits(5, 9);
        for (double& x : logits.data) x = rng.normal() * 3.0;
        const std::vector<std::size_t> positions = {0, 2, 4};
        const std::vector<int> targets = {1, 8, 0};
        double expect = 0.0;
        for (std::size_t m = 0; m < positions.size(); ++m) {
            double lse = 0.0;
            for (std::size_t j = 0; j < logits.cols; ++j) {
                lse += std::exp(logits.at(positions[m], j));
            }
            expect += std::log(lse) - logits.at(positions[m],
                                                static_cast<std::size_t>(targets[m]));
        }
        expect /= 3.0;
        CHECK(moi::mlm_loss(logits, positions, targets) ==
              doctest::Approx(expect).epsilon(1e-10));
    }
    SUBCASE("unmasked positions cannot move the loss") {
        moi::Rng rng(4);
        Matrix logits(5, 9);
        for (double& x : logits.data) x = rng.normal();
        const double before = moi::mlm_loss(logits, {1, 3}, {2, 4});
        for (std::size_t j = 0; j < logits.cols; ++j) {
            logits.at(0, j) = 1000.0 * rng.normal();
            logits.at(2, j) = -77.0;
            logits.at(4, j) = rng.normal();
        }
        CHECK(moi::mlm_loss(logits, {1, 3}, {2, 4}) == before);
    }
    SUBCASE("no targets is an input error") {
        CHECK_THROWS_AS(moi::mlm_loss(Matrix(2, 3), {}, {}), moi::InputError);
    }
}

TEST_CASE("adam_step") {
    SUBCASE("zero gradient and zero decay leave parameters untouched") {
        Matrix p = Matrix::from_rows({{1.0, -2.0}});
        const Matrix g(1, 2, 0.0);
        std::vector<Matrix*> params = {&p};
        moi::AdamState state = moi::AdamState::init(params);
        moi::adam_step(params, {&g}, state, 0.1, 0.0);
        CHECK(p.at(0, 0) == 1.0);
        CHECK(p.at(0, 1) == -2.0);
        CHECK(state.step == 1);
    }
    SUBCASE("first step moves by about -lr * sign(g)") {
        Matrix p(1, 3, 0.0);
        Matrix g = Matrix::from_rows({{0.3, -4.0, 1e-3}});
        std::vector<Matrix*> params = {&p};
        moi::AdamState state = moi::AdamState::init(params);
        const double lr = 0.01;
        moi::adam_step(params, {&g}, state, lr, 0.0);
        for (std::size_t j = 0; j < 3; ++j) {
            const double expect = -lr * g.data[j] / (std::fabs(g.data[j]) + state.eps);
            CHECK(p.data[j] == doctest::Approx(expect).epsilon(1e-9));
        }
    }
    SUBCASE("pure weight decay shrinks by (1 - lr * wd)") {
        Matrix p = Matrix::from_rows({{2.0, -8.0}});
        const Matrix g(1, 2, 0.0);
        std::vector<Matrix*> params = {&p};
        moi::AdamState state = moi::AdamState::init(params);
        moi::adam_step(params, {&g}, state, 0.1, 0.5);
        CHECK(p.at(0, 0) == doctest::Approx(2.0 * (1.0 - 0.05)));
        CHECK(p.at(0, 1) == doctest::Approx(-8.0 * (1.0 - 0.05)));
    }
    SUBCASE("doubling lr doubles the first-step update") {
        Matrix p1(1, 4, 1.0), p2(1, 4, 1.0);
        moi::Rng rng(5);
        Matrix g(1, 4);
        for (double& x : g.data) x = rng.normal();
        std::vector<Matrix*> a = {&p1}, b = {&p2};
        moi::AdamState s1 = moi::AdamState::init(a), s2 = moi::AdamState::init(b);
        moi::adam_step(a, {&g}, s1, 0.01, 0.0);
        moi::adam_step(b, {&g}, s2, 0.02, 0.0);
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK((p2.data[j] - 1.0) == doctest::Approx(2.0 * (p1.data[j] - 1.0)).epsilon(1e-12));
        }
    }
}

TEST_CASE("cosine schedule") {
    CHECK(moi::cosine_lr(0, 200, 1e-3) == doctest::Approx(1e-3));
    CHECK(moi::cosine_lr(100, 200, 1e-3) == doctest::Approx(5e-4));
    const double last = moi::cosine_lr(199, 200, 1e-3);
    const double direct =
        1e-3 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * 199.0 / 200.0));
    CHECK(last == doctest::Approx(direct).epsilon(1e-12));
    CHECK_THROWS_AS(moi::cosine_lr(200, 200, 1e-3), moi::ConfigError);
}

TEST_CASE("one epoch at lr=0 leaves parameters unchanged") {
    const moi::InteractionDataset data =
        moi::synth_generate(10, 12, 5, 8, moi::SynthRule::uniform, 1);
    moi::MoiMixerModel model = moi::MoiMixerModel::init(smoke_model_config(10, 8), 2);
    const moi::MoiMixerModel before = model;

    TrainConfig tc;
    tc.lr = 1e-30;  // effectively zero while satisfying lr > 0
    tc.weight_decay = 0.0;
    tc.epochs = 1;
    tc.batch_size = 4;
    tc.mask_prob = 0.3;
    tc.seed = 3;
    moi::train(model, data, tc);
    const auto before_named = before.named_params();
    const auto after_named = model.named_params();
    for (std::size_t i = 0; i < before_named.size(); ++i) {
        for (std::size_t e = 0; e < before_named[i].value->size(); ++e) {
            CHECK(std::fabs(after_named[i].value->data[e] - before_named[i].value->data[e]) <
                  1e-20);
        }
    }
}

TEST_CASE("loss decreases over the first epochs on successor data") {
    const moi::InteractionDataset data =
        moi::synth_generate(20, 64, 6, 10, moi::SynthRule::successor, 9);
    moi::MoiMixerModel model = moi::MoiMixerModel::init(smoke_model_config(20, 10), 4);
    TrainConfig tc;
    tc.lr = 3e-3;
    tc.weight_decay = 0.0;
    tc.epochs = 5;
    tc.batch_size = 16;
    tc.mask_prob = 0.3;
    tc.seed = 11;
    const std::vector<moi::EpochLog> history = moi::train(model, data, tc);
    REQUIRE(history.size() == 5);
    for (std::size_t e = 1; e < history.size(); ++e) {
        CHECK(history[e].loss < history[e - 1].loss);
    }
}

TEST_CASE("training is bit-deterministic per seed") {
    const moi::InteractionDataset data =
        moi::synth_generate(12, 20, 5, 8, moi::SynthRule::successor, 5);
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.weight_decay = 1e-4;
    tc.epochs = 3;
    tc.batch_size = 8;
    tc.mask_prob = 0.4;
    tc.seed = 21;

    std::ostringstream log_a, log_b;
    moi::ModelConfig mc = smoke_model_config(12, 8);
    mc.dropout = 0.2;  // exercise the dropout stream too
    moi::MoiMixerModel model_a = moi::MoiMixerModel::init(mc, 6);
    moi::MoiMixerModel model_b = moi::MoiMixerModel::init(mc, 6);
    moi::train(model_a, data, tc, &log_a);
    moi::train(model_b, data, tc, &log_b);
    CHECK(log_a.str() == log_b.str());
    const auto na = model_a.named_params();
    const auto nb = model_b.named_params();
    for (std::size_t i = 0; i < na.size(); ++i) {
        CHECK(na[i].value->data == nb[i].value->data);
    }
}

TEST_CASE("epoch log lines are tab-separated epoch/loss/lr") {
    const std::string line = moi::format_epoch_line({3, 0.5, 0.001});
    CHECK(line.substr(0, 2) == "3\t");
    CHECK(std::count(line.begin(), line.end(), '\t') == 2);
}
