#include "adm/episodes.hpp"

#include <fstream>
#include <set>
#include <unordered_map>

#include <json.hpp>

namespace adm {

void SplitSpec::validate() const {
    std::set<uint32_t> seen;
    size_t total = 0;
    for (const auto* part : {&train, &val, &test}) {
        seen.insert(part->begin(), part->end());
        total += part->size();
    }
    if (seen.size() != total)
        throw InvalidSpecError("SplitSpec: roles are not pairwise disjoint");
}

const std::vector<uint32_t>& SplitSpec::role(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw InvalidSpecError("SplitSpec: unknown role " + name);
}

SplitSpec load_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("split JSON parse error: " + std::string(e.what()));
    }
    SplitSpec s;
    try {
        s.train = j.value("train", std::vector<uint32_t>{});
        s.val = j.value("val", std::vector<uint32_t>{});
        s.test = j.value("test", std::vector<uint32_t>{});
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("split JSON structure error: " + std::string(e.what()));
    }
    s.validate();
    return s;
}

void save_split(const SplitSpec& split, const std::filesystem::path& path) {
    split.validate();
    nlohmann::ordered_json j;
    j["train"] = split.train;
    j["val"] = split.val;
    j["test"] = split.test;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
    if (!out.good()) throw IoError("write failure on " + path.string());
}

Episode sample_episode(const LabeledDataset& dataset, const std::vector<uint32_t>& split_class_ids,
                       const EpisodeSpec& spec, Rng& stream) {
    spec.validate();
    if (static_cast<int>(split_class_ids.size()) < spec.ways)
        throw InsufficientClassesError("sample_episode: split has " +
                                       std::to_string(split_class_ids.size()) +
                                       " classes, need " + std::to_string(spec.ways));

    std::unordered_map<uint32_t, int> class_index;
    for (int i = 0; i < static_cast<int>(dataset.classes.size()); ++i)
        class_index[dataset.classes[i].class_id] = i;

    const std::vector<int> chosen =
        stream.sample_without_replacement(static_cast<int>(split_class_ids.size()), spec.ways);

    Episode ep;
    const int per_class = spec.shots + spec.queries_per_class;
    for (int label = 0; label < spec.ways; ++label) {
        const uint32_t cid = split_class_ids[chosen[label]];
        auto it = class_index.find(cid);
        if (it == class_index.end())
            throw InsufficientClassesError("sample_episode: split class " + std::to_string(cid) +
                                           " not in dataset");
        const int ci = it->second;
        const int available = static_cast<int>(dataset.classes[ci].images.size());
        if (available < per_class)
            throw InsufficientImagesError("sample_episode: class " + std::to_string(cid) +
                                          " has " + std::to_string(available) + " images, need " +
                                          std::to_string(per_class));
        const std::vector<int> images = stream.sample_without_replacement(available, per_class);

        Episode::SupportClass sc;
        sc.dataset_class_id = cid;
        sc.class_index = ci;
        sc.image_indices.assign(images.begin(), images.begin() + spec.shots);
        ep.support.push_back(std::move(sc));
        for (int t = spec.shots; t < per_class; ++t)
            ep.queries.push_back({label, ci, images[t]});
    }
    return ep;
}

}  // namespace adm
