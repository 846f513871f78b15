// Command-line front end: dataset preparation, training, evaluation,
// complexity accounting, and the interaction-order grid experiment.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "moi/dataset.hpp"
#include "moi/evaluation.hpp"
#include "moi/model.hpp"
#include "moi/runconfig.hpp"
#include "moi/training.hpp"

namespace {

constexpr const char* kVersion = "moi-mixer 1.0.0";

namespace fs = std::filesystem;

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw moi::IoError("cannot write " + path);
    out << content;
}

moi::RunConfig make_config(const std::string& config_path,
                           const std::vector<std::string>& sets) {
    moi::RunConfig config;
    if (!config_path.empty()) config.load_file(config_path);
    for (const std::string& kv : sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw moi::ConfigError("--set expects key=value, got '" + kv + "'");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        config.apply(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    return config;
}

std::string stats_line(const moi::InteractionDataset& data) {
    const long long total = data.total_interactions();
    const double avg =
        static_cast<double>(total) / static_cast<double>(data.user_count());
    char buf[160];
    std::snprintf(buf, sizeof(buf), "# users\titems\tinteractions\tavg_per_user\n%zu\t%zu\t%lld\t%.4f\n",
                  data.user_count(), data.item_count, total, avg);
    return std::string(buf);
}

std::vector<std::size_t> parse_order_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        const std::string tok = text.substr(start, comma == std::string::npos
                                                       ? std::string::npos
                                                       : comma - start);
        if (!tok.empty()) out.push_back(std::stoul(tok));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw moi::ConfigError("empty order list '" + text + "'");
    return out;
}

int cmd_prepare(const std::string& input, const std::string& out_dir,
                std::size_t min_count) {
    moi::ParseResult parsed = moi::parse_tsv(input);
    if (parsed.malformed > 0) {
        std::cerr << "warning: skipped " << parsed.malformed << " malformed lines\n";
    }
    std::vector<moi::RawInteraction> filtered =
        moi::core_filter(std::move(parsed.interactions), min_count);
    moi::InteractionDataset data = moi::split_leave_one_out(filtered);
    moi::save_dataset(data, out_dir);
    const std::string stats = stats_line(data);
    write_file(out_dir + "/stats.tsv", stats);
    std::cout << stats;
    return 0;
}

int cmd_synth(const std::string& out_dir, std::size_t vocab, std::size_t users,
              std::size_t min_len, std::size_t max_len, const std::string& rule,
              std::uint64_t seed) {
    moi::SynthRule r;
    if (rule == "successor") {
        r = moi::SynthRule::successor;
    } else if (rule == "uniform") {
        r = moi::SynthRule::uniform;
    } else {
        throw moi::ConfigError("rule must be successor or uniform, got '" + rule + "'");
    }
    moi::InteractionDataset data =
        moi::synth_generate(vocab, users, min_len, max_len, r, seed);
    moi::save_dataset(data, out_dir);
    const std::string stats = stats_line(data);
    write_file(out_dir + "/stats.tsv", stats);
    std::cout << stats;
    return 0;
}

int cmd_train(moi::RunConfig config, std::uint64_t seed) {
    if (config.data_dir.empty()) throw moi::ConfigError("train needs data_dir");
    config.train.seed = seed;
    fs::create_directories(config.out_dir);
    write_file(config.out_dir + "/config.resolved", config.resolved_text());

    moi::InteractionDataset data = moi::load_dataset(config.data_dir);
    config.model.vocab = data.item_count;
    config.model.validate();
    config.train.validate();

    moi::MoiMixerModel model = moi::MoiMixerModel::init(config.model, seed);
    std::ofstream log(config.out_dir + "/log.txt", std::ios::trunc);
    if (!log) throw moi::IoError("cannot write " + config.out_dir + "/log.txt");
    const std::vector<moi::EpochLog> history =
        moi::train(model, data, config.train, &log, config.out_dir + "/checkpoint.bin");
    std::cout << "trained " << history.size() << " epochs, final loss "
              << history.back().loss << "\n";
    std::cout << "checkpoint: " << config.out_dir << "/checkpoint.bin\n";
    return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data_dir,
                 const std::string& out_dir, std::uint64_t seed,
                 const std::string& split_name, bool pop) {
    moi::EvalSplit split;
    if (split_name == "test") {
        split = moi::EvalSplit::test;
    } else if (split_name == "valid") {
        split = moi::EvalSplit::validation;
    } else {
        throw moi::ConfigError("split must be test or valid, got '" + split_name + "'");
    }
    moi::InteractionDataset data = moi::load_dataset(data_dir);
    fs::create_directories(out_dir);

    moi::EvalReport report;
    if (pop) {
        report = moi::pop_baseline(data, seed, split);
    } else {
        if (checkpoint.empty()) {
            throw moi::ConfigError("evaluate needs --checkpoint (or --pop)");
        }
        moi::MoiMixerModel model = moi::MoiMixerModel::load(checkpoint);
        if (model.config.vocab != data.item_count) {
            throw moi::ConfigError("checkpoint vocab does not match dataset");
        }
        report = moi::evaluate_model(model, data, seed, split);
    }
    const std::string tsv = moi::report_to_tsv(report);
    write_file(out_dir + "/report.tsv", tsv);
    std::cout << moi::report_to_table(report);
    std::cout << tsv;
    return 0;
}

int cmd_count(moi::RunConfig config) {
    if (config.model.vocab == 0) config.model.vocab = 1000;  // nominal catalog
    config.model.validate();
    moi::MoiMixerModel model = moi::MoiMixerModel::init(config.model, 0);
    const moi::ParamCountReport params = moi::count_params(model);
    std::cout << moi::kFlopsConventionNote << "\n";
    std::printf("params_encoder\t%lld\t%.2fM\n", params.encoder, params.encoder_millions());
    std::printf("params_encoder_all\t%lld\n", params.encoder_all);
    std::printf("params_total\t%lld\n", params.total);
    std::printf("s\tflops\tflops_M\n");
    std::vector<std::size_t> lengths = {100, 200, 400, 600, 800, 1000};
    if (std::find(lengths.begin(), lengths.end(), config.model.seq_len) == lengths.end()) {
        lengths.insert(lengths.begin(), config.model.seq_len);
    }
    for (std::size_t s : lengths) {
        moi::ModelConfig at_s = config.model;
        at_s.seq_len = s;
        const long long flops = moi::count_flops(at_s, s);
        std::printf("%zu\t%lld\t%.2f\n", s, flops, static_cast<double>(flops) / 1e6);
    }
    return 0;
}

int cmd_grid(moi::RunConfig config, std::uint64_t seed, const std::string& ks_text,
             const std::string& kc_text) {
    if (config.data_dir.empty()) throw moi::ConfigError("grid needs data_dir");
    config.train.seed = seed;
    fs::create_directories(config.out_dir);
    write_file(config.out_dir + "/config.resolved", config.resolved_text());

    moi::InteractionDataset data = moi::load_dataset(config.data_dir);
    const moi::GridResult grid =
        moi::grid_experiment(data, config.model, parse_order_list(ks_text),
                             parse_order_list(kc_text), config.train);
    const std::string tsv = moi::grid_to_tsv(grid);
    write_file(config.out_dir + "/grid.tsv", tsv);
    std::cout << tsv;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixer-based sequential recommender with multi-order interaction layers"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path, input_path, out_dir, data_dir, checkpoint, split = "test";
    std::string rule = "successor", ks_text = "1", kc_text = "1,2";
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    std::size_t min_count = 5, vocab = 50, users = 500, min_len = 8, max_len = 16;
    bool pop = false;

    CLI::App* prepare = app.add_subcommand("prepare", "Ingest a user/item/timestamp TSV");
    prepare->add_option("input", input_path, "raw TSV file")->required();
    prepare->add_option("--out", out_dir, "output directory")->required();
    prepare->add_option("--min-count", min_count, "minimum interactions per user/item");

    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_option("--vocab", vocab, "catalog size");
    synth->add_option("--users", users, "number of users");
    synth->add_option("--min-len", min_len, "minimum sequence length");
    synth->add_option("--max-len", max_len, "maximum sequence length");
    synth->add_option("--rule", rule, "successor | uniform");
    synth->add_option("--seed", seed, "generator seed")->required();

    CLI::App* train = app.add_subcommand("train", "Train a model");
    train->add_option("--config", config_path, "key = value config file");
    train->add_option("--set", sets, "override config key=value");
    train->add_option("--seed", seed, "run seed")->required();
    train->add_option("--data", data_dir, "prepared dataset directory");
    train->add_option("--out", out_dir, "run directory");

    CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint");
    evaluate->add_option("--checkpoint", checkpoint, "checkpoint path");
    evaluate->add_option("--data", data_dir, "prepared dataset directory")->required();
    evaluate->add_option("--seed", seed, "negative sampler seed")->required();
    evaluate->add_option("--out", out_dir, "run directory");
    evaluate->add_option("--split", split, "test | valid");
    evaluate->add_flag("--pop", pop, "popularity baseline instead of a checkpoint");

    CLI::App* count = app.add_subcommand("count", "Parameter and FLOP accounting");
    count->add_option("--config", config_path, "key = value config file");
    count->add_option("--set", sets, "override config key=value");

    CLI::App* grid = app.add_subcommand("grid", "Interaction-order grid experiment");
    grid->add_option("--config", config_path, "key = value config file");
    grid->add_option("--set", sets, "override config key=value");
    grid->add_option("--seed", seed, "run seed")->required();
    grid->add_option("--data", data_dir, "prepared dataset directory");
    grid->add_option("--out", out_dir, "run directory");
    grid->add_option("--ks", ks_text, "token orders, e.g. 1,2");
    grid->add_option("--kc", kc_text, "channel orders, e.g. 1,2,3");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (prepare->parsed()) return cmd_prepare(input_path, out_dir, min_count);
        if (synth->parsed()) {
            return cmd_synth(out_dir, vocab, users, min_len, max_len, rule, seed);
        }
        if (train->parsed()) {
            moi::RunConfig config = make_config(config_path, sets);
            if (!data_dir.empty()) config.data_dir = data_dir;
            if (!out_dir.empty()) config.out_dir = out_dir;
            return cmd_train(std::move(config), seed);
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(checkpoint, data_dir, out_dir.empty() ? "run" : out_dir,
                                seed, split, pop);
        }
        if (count->parsed()) return cmd_count(make_config(config_path, sets));
        if (grid->parsed()) {
            moi::RunConfig config = make_config(config_path, sets);
            if (!data_dir.empty()) config.data_dir = data_dir;
            if (!out_dir.empty()) config.out_dir = out_dir;
            return cmd_grid(std::move(config), seed, ks_text, kc_text);
        }
    } catch (const moi::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const moi::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const moi::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
