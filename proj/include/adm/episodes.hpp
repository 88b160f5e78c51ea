#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "adm/descriptors.hpp"
#include "adm/rng.hpp"

namespace adm {

struct EpisodeSpec {
    int ways = 5;
    int shots = 1;
    int queries_per_class = 15;

    void validate() const {
        if (ways < 1 || shots < 1 || queries_per_class < 1)
            throw InvalidSpecError("EpisodeSpec: counts must be positive");
    }
};

/// One C-way K-shot task. Holds indices into the source dataset; episode-local
/// labels run 0..C-1 in class-draw order, with the dataset class ids recorded.
struct Episode {
    struct SupportClass {
        uint32_t dataset_class_id = 0;
        int class_index = 0;               // index into dataset.classes
        std::vector<int> image_indices;    // K entries
    };
    struct QueryItem {
        int label = 0;        // episode-local, 0..C-1
        int class_index = 0;  // index into dataset.classes
        int image_index = 0;
    };

    std::vector<SupportClass> support;  // C entries
    std::vector<QueryItem> queries;     // C * q entries, grouped by class
};

/// Disjoint class-id lists for the train/validation/test roles.
struct SplitSpec {
    std::vector<uint32_t> train, val, test;

    void validate() const;
    const std::vector<uint32_t>& role(const std::string& name) const;
};

SplitSpec load_split(const std::filesystem::path& path);
void save_split(const SplitSpec& split, const std::filesystem::path& path);

/// Derived RNG state for episode `index` of a run; episode t is identical
/// regardless of worker count or evaluation order.
inline Rng episode_stream(uint64_t seed, uint64_t index) { return Rng::stream(seed, index); }

/// Draw C classes from `split_class_ids` without replacement, then K+q images
/// per class without replacement: first K to support, remaining q to query.
/// Deterministic for a given stream state.
Episode sample_episode(const LabeledDataset& dataset, const std::vector<uint32_t>& split_class_ids,
                       const EpisodeSpec& spec, Rng& stream);

}  // namespace adm
