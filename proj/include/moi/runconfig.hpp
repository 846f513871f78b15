#pragma once

#include <string>
#include <vector>

#include "moi/model.hpp"
#include "moi/training.hpp"

namespace moi {

/// Merged model + training configuration backing every CLI command. Loaded
/// from a `key = value` text file with `--set key=value` overrides; unknown
/// keys are hard errors. The item vocabulary always comes from the dataset.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string data_dir;
    std::string out_dir = "run";

    void apply(const std::string& key, const std::string& value);
    void load_file(const std::string& path);

    // Every schema key with its resolved value, one `key = value` per line,
    // in fixed order.
    std::string resolved_text() const;
};

}  // namespace moi
