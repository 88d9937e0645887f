#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hsd/corpus.hpp"
#include "hsd/random.hpp"

namespace hsd::fixtures {

/// Two-class corpus whose classes use disjoint words (and disjoint letters),
/// so every family can separate them. Every third item is HOF.
inline Dataset separable_dataset(std::size_t n, std::uint64_t seed = 3) {
    static const std::vector<std::string> good{"lovely", "sunny", "happy", "gentle", "calm", "bright"};
    static const std::vector<std::string> bad{"xqz", "zzkx", "qqvx", "kxzq", "vzk", "xkv"};
    Rng rng(seed);
    Dataset ds;
    ds.task = Task::k1A;
    static const Label1B fine[] = {Label1B::kHate, Label1B::kOffn, Label1B::kPrfn};
    for (std::size_t i = 0; i < n; ++i) {
        const bool hof = i % 3 == 0;
        const auto& words = hof ? bad : good;
        std::string text;
        const int len = 2 + static_cast<int>(rng.below(3));
        for (int w = 0; w < len; ++w) {
            if (w) text += ' ';
            text += words[rng.below(words.size())];
        }
        LabeledText item;
        item.id = "s" + std::to_string(i);
        item.text = text;
        item.label_1a = hof ? Label1A::kHof : Label1A::kNot;
        item.label_1b = hof ? fine[rng.below(3)] : Label1B::kNone;
        ds.items.push_back(std::move(item));
    }
    return ds;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("hsd_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace hsd::fixtures
