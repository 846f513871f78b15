#include "moi/dataset.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "moi/rng.hpp"

namespace moi {

namespace {

bool parse_double(const std::string& s, double* out) {
    if (s.empty()) return false;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return false;
    *out = v;
    return true;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

}  // namespace

ParseResult parse_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    ParseResult result;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++result.total_lines;
        const std::vector<std::string> fields = split_tabs(line);
        double ts;
        if (fields.size() != 3 || fields[0].empty() || fields[1].empty() ||
            !parse_double(fields[2], &ts)) {
            ++result.malformed;
            continue;
        }
        result.interactions.push_back({fields[0], fields[1], ts});
    }
    if (result.total_lines == 0) {
        std::cerr << "warning: " << path << " contains no interactions\n";
    }
    if (result.malformed * 100 > result.total_lines) {
        throw InputError(path + ": " + std::to_string(result.malformed) + " of " +
                         std::to_string(result.total_lines) + " lines malformed (>1%)");
    }
    return result;
}

std::vector<RawInteraction> core_filter(std::vector<RawInteraction> raw,
                                        std::size_t min_count) {
    bool changed = true;
    while (changed) {
        changed = false;
        std::unordered_map<std::string, std::size_t> user_counts, item_counts;
        for (const RawInteraction& r : raw) {
            ++user_counts[r.user];
            ++item_counts[r.item];
        }
        std::vector<RawInteraction> kept;
        kept.reserve(raw.size());
        for (RawInteraction& r : raw) {
            if (user_counts[r.user] >= min_count && item_counts[r.item] >= min_count) {
                kept.push_back(std::move(r));
            }
        }
        if (kept.size() != raw.size()) changed = true;
        raw = std::move(kept);
    }
    if (raw.empty()) {
        throw InputError("core filter removed every interaction (min_count=" +
                         std::to_string(min_count) + ")");
    }
    return raw;
}

std::vector<int> pad_truncate(const std::vector<int>& sequence, std::size_t s, int pad_id) {
    std::vector<int> out(s, pad_id);
    if (sequence.size() >= s) {
        std::copy(sequence.end() - static_cast<std::ptrdiff_t>(s), sequence.end(), out.begin());
    } else {
        std::copy(sequence.begin(), sequence.end(), out.begin() + (s - sequence.size()));
    }
    return out;
}

long long InteractionDataset::total_interactions() const {
    long long n = 0;
    for (const std::vector<int>& seq : train) n += static_cast<long long>(seq.size()) + 2;
    return n;
}

void InteractionDataset::validate() const {
    if (train.size() != valid.size() || train.size() != test.size()) {
        throw InputError("dataset split sizes disagree");
    }
    if (popularity.size() != item_count + 1) {
        throw InputError("popularity table size mismatch");
    }
}

InteractionDataset split_leave_one_out(const std::vector<RawInteraction>& filtered) {
    // Group per user in first-appearance order; dense item ids likewise.
    std::unordered_map<std::string, std::size_t> user_index;
    std::vector<std::string> user_order;
    std::vector<std::vector<std::pair<double, int>>> sequences;  // (timestamp, item id)
    std::unordered_map<std::string, int> item_index;
    std::vector<std::string> item_order;

    for (const RawInteraction& r : filtered) {
        auto [uit, unew] = user_index.try_emplace(r.user, user_order.size());
        if (unew) {
            user_order.push_back(r.user);
            sequences.emplace_back();
        }
        auto [iit, inew] = item_index.try_emplace(r.item, static_cast<int>(item_order.size()) + 1);
        if (inew) item_order.push_back(r.item);
        sequences[uit->second].emplace_back(r.timestamp, iit->second);
    }

    InteractionDataset data;
    data.item_count = item_order.size();
    data.popularity.assign(data.item_count + 1, 0);
    data.item_labels.reserve(item_order.size() + 1);
    data.item_labels.emplace_back("");
    for (std::string label : item_order) data.item_labels.push_back(std::move(label));

    for (std::size_t u = 0; u < sequences.size(); ++u) {
        std::vector<std::pair<double, int>>& seq = sequences[u];
        if (seq.size() < 3) {
            std::cerr << "warning: user '" << user_order[u]
                      << "' has fewer than 3 interactions after filtering, dropped\n";
            continue;
        }
        std::stable_sort(seq.begin(), seq.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<int> items;
        items.reserve(seq.size());
        for (const auto& [ts, item] : seq) items.push_back(item);
        data.test.push_back(items.back());
        data.valid.push_back(items[items.size() - 2]);
        items.resize(items.size() - 2);
        for (int item : items) ++data.popularity[static_cast<std::size_t>(item)];
        data.train.push_back(std::move(items));
        data.user_labels.push_back(user_order[u]);
    }
    data.validate();
    return data;
}

std::vector<int> sample_negatives(const InteractionDataset& data, std::size_t user,
                                  int ground_truth, std::size_t n, std::uint64_t seed) {
    if (user >= data.user_count()) {
        throw InputError("user index " + std::to_string(user) + " out of range");
    }
    std::unordered_set<int> excluded(data.train[user].begin(), data.train[user].end());
    excluded.insert(ground_truth);

    std::vector<int> items;
    std::vector<double> weights;
    for (std::size_t item = 1; item <= data.item_count; ++item) {
        if (data.popularity[item] <= 0) continue;
        if (excluded.count(static_cast<int>(item))) continue;
        items.push_back(static_cast<int>(item));
        weights.push_back(static_cast<double>(data.popularity[item]));
    }

    if (items.size() < n) {
        std::cerr << "warning: only " << items.size() << " eligible negatives (wanted " << n
                  << ") for user " << user << "\n";
        return items;
    }

    Rng rng(seed);
    std::vector<int> drawn;
    drawn.reserve(n);
    double total = 0.0;
    for (double w : weights) total += w;
    for (std::size_t d = 0; d < n; ++d) {
        double u = rng.uniform() * total;
        std::size_t pick = items.size() - 1;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (weights[i] <= 0.0) continue;
            if (u < weights[i]) {
                pick = i;
                break;
            }
            u -= weights[i];
        }
        // Guard against picking an exhausted slot on floating-point spill.
        while (weights[pick] <= 0.0 && pick > 0) --pick;
        drawn.push_back(items[pick]);
        total -= weights[pick];
        weights[pick] = 0.0;
    }
    return drawn;
}

InteractionDataset synth_generate(std::size_t vocab, std::size_t users,
                                  std::size_t min_len, std::size_t max_len,
                                  SynthRule rule, std::uint64_t seed) {
    if (vocab < 3) throw ConfigError("synthetic vocabulary must have >= 3 items");
    if (min_len < 3 || max_len < min_len) {
        throw ConfigError("synthetic lengths must satisfy 3 <= min_len <= max_len");
    }
    Rng rng(seed);
    InteractionDataset data;
    data.item_count = vocab;
    data.popularity.assign(vocab + 1, 0);
    for (std::size_t u = 0; u < users; ++u) {
        const std::size_t len = min_len + rng.integer(max_len - min_len + 1);
        std::vector<int> items(len);
        if (rule == SynthRule::successor) {
            const std::size_t start = rng.integer(vocab);
            for (std::size_t t = 0; t < len; ++t) {
                items[t] = static_cast<int>((start + t) % vocab) + 1;
            }
        } else {
            for (std::size_t t = 0; t < len; ++t) {
                items[t] = static_cast<int>(rng.integer(vocab)) + 1;
            }
        }
        data.test.push_back(items.back());
        data.valid.push_back(items[items.size() - 2]);
        items.resize(items.size() - 2);
        for (int item : items) ++data.popularity[static_cast<std::size_t>(item)];
        data.train.push_back(std::move(items));
    }
    data.validate();
    return data;
}

void save_dataset(const InteractionDataset& data, const std::string& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const std::string& name) {
        std::ofstream out(dir + "/" + name, std::ios::trunc);
        if (!out) throw IoError("cannot write " + dir + "/" + name);
        return out;
    };
    {
        std::ofstream out = open("train.tsv");
        for (std::size_t u = 0; u < data.user_count(); ++u) {
            for (int item : data.train[u]) out << u << "\t" << item << "\n";
        }
    }
    {
        std::ofstream out = open("valid.tsv");
        for (std::size_t u = 0; u < data.user_count(); ++u) {
            out << u << "\t" << data.valid[u] << "\n";
        }
    }
    {
        std::ofstream out = open("test.tsv");
        for (std::size_t u = 0; u < data.user_count(); ++u) {
            out << u << "\t" << data.test[u] << "\n";
        }
    }
    {
        std::ofstream out = open("popularity.tsv");
        for (std::size_t item = 1; item <= data.item_count; ++item) {
            out << item << "\t" << data.popularity[item] << "\n";
        }
    }
}

InteractionDataset load_dataset(const std::string& dir) {
    auto open = [&](const std::string& name) {
        std::ifstream in(dir + "/" + name);
        if (!in) throw IoError("cannot read " + dir + "/" + name);
        return in;
    };
    InteractionDataset data;
    {
        std::ifstream in = open("popularity.tsv");
        std::size_t item;
        long long count;
        std::vector<long long> counts;
        while (in >> item >> count) {
            if (item != counts.size() + 1) {
                throw InputError("popularity.tsv items must be dense from 1");
            }
            counts.push_back(count);
        }
        data.item_count = counts.size();
        data.popularity.assign(data.item_count + 1, 0);
        for (std::size_t i = 0; i < counts.size(); ++i) data.popularity[i + 1] = counts[i];
    }
    {
        std::ifstream in = open("train.tsv");
        std::size_t user;
        int item;
        while (in >> user >> item) {
            if (user >= data.train.size()) data.train.resize(user + 1);
            data.train[user].push_back(item);
        }
    }
    auto read_targets = [&](const std::string& name, std::vector<int>* out) {
        std::ifstream in = open(name);
        out->assign(data.train.size(), 0);
        std::size_t user;
        int item;
        while (in >> user >> item) {
            if (user >= out->size()) throw InputError(name + ": user out of range");
            (*out)[user] = item;
        }
    };
    read_targets("valid.tsv", &data.valid);
    read_targets("test.tsv", &data.test);
    data.validate();
    return data;
}

}  // namespace moi
