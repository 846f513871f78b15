#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moi/matrix.hpp"

namespace moi {

struct RawInteraction {
    std::string user;
    std::string item;
    double timestamp = 0.0;
};

struct ParseResult {
    std::vector<RawInteraction> interactions;
    std::size_t malformed = 0;
    std::size_t total_lines = 0;
};

// Reads `user<TAB>item<TAB>timestamp` lines. Malformed lines are counted and
// skipped; more than 1% malformed is a format error, an unreadable file an
// I/O error.
ParseResult parse_tsv(const std::string& path);

// Iteratively removes users and items with fewer than min_count interactions
// until a fixpoint; file order is preserved. Throws when nothing survives.
std::vector<RawInteraction> core_filter(std::vector<RawInteraction> raw,
                                        std::size_t min_count = 5);

/// Per-user chronological sequences split leave-one-out: last item held out
/// for test, second-last for validation. Item ids are re-indexed densely from
/// 1 (0 is the pad id, item_count + 1 the mask id); popularity counts cover
/// training interactions only.
struct InteractionDataset {
    std::size_t item_count = 0;             // V
    std::vector<std::vector<int>> train;    // per user
    std::vector<int> valid;                 // per user
    std::vector<int> test;                  // per user
    std::vector<long long> popularity;      // size V + 1, indexed by item id
    std::vector<std::string> user_labels;   // original keys (empty if synthetic)
    std::vector<std::string> item_labels;   // index 0 unused

    std::size_t user_count() const { return train.size(); }
    long long total_interactions() const;
    void validate() const;
};

// Groups by user, sorts by timestamp (stable, ties keep file order), re-indexes
// items, and splits. Users left with fewer than 3 items are dropped with a
// warning on stderr.
InteractionDataset split_leave_one_out(const std::vector<RawInteraction>& filtered);

// Draws n distinct items with probability proportional to their popularity,
// never the ground truth nor the user's training items. Fewer than n eligible
// items yields all of them plus a warning.
std::vector<int> sample_negatives(const InteractionDataset& data, std::size_t user,
                                  int ground_truth, std::size_t n, std::uint64_t seed);

enum class SynthRule { successor, uniform };

// Synthetic dataset: `successor` walks i, i+1, i+2, ... mod V from a random
// start (the next item is fully determined), `uniform` draws items i.i.d.
InteractionDataset synth_generate(std::size_t vocab, std::size_t users,
                                  std::size_t min_len, std::size_t max_len,
                                  SynthRule rule, std::uint64_t seed);

// Keeps the most recent `s` items, left-padding shorter sequences with pad_id.
std::vector<int> pad_truncate(const std::vector<int>& sequence, std::size_t s,
                              int pad_id = 0);

// train/valid/test TSVs plus popularity.tsv (`item<TAB>count`).
void save_dataset(const InteractionDataset& data, const std::string& dir);
InteractionDataset load_dataset(const std::string& dir);

}  // namespace moi
