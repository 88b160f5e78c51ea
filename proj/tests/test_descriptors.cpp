#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "adm/descriptors.hpp"
#include "adm/distributions.hpp"
#include "adm/rng.hpp"

using namespace adm;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    return fs::temp_directory_path() / ("adm_test_" + name);
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

LabeledDataset random_dataset(Rng& rng) {
    const int num_classes = 1 + static_cast<int>(rng.next_below(4));
    const int c = 1 + static_cast<int>(rng.next_below(6));
    LabeledDataset ds;
    for (int ci = 0; ci < num_classes; ++ci) {
        LabeledClass cl;
        cl.class_id = static_cast<uint32_t>(ci * 3 + 1);
        const int images = 1 + static_cast<int>(rng.next_below(3));
        for (int ii = 0; ii < images; ++ii) {
            const int n = 1 + static_cast<int>(rng.next_below(5));
            std::vector<float> data(static_cast<size_t>(n) * c);
            for (auto& v : data) v = static_cast<float>(rng.next_normal());
            cl.images.emplace_back(n, c, std::move(data));
        }
        ds.classes.push_back(std::move(cl));
    }
    return ds;
}

}  // namespace

TEST_SUITE_BEGIN("descriptors");

TEST_CASE("flatten unrolls spatial positions row-major") {
    FeatureMap m;
    m.channels = 2;
    m.height = 1;
    m.width = 2;
    m.values = {1, 2, 3, 4};  // channel 0: [[1,2]], channel 1: [[3,4]]
    const DescriptorSet d = flatten_feature_map(m);
    REQUIRE(d.size() == 2);
    REQUIRE(d.dim() == 2);
    CHECK(d.descriptor(0)[0] == 1.0f);
    CHECK(d.descriptor(0)[1] == 3.0f);
    CHECK(d.descriptor(1)[0] == 2.0f);
    CHECK(d.descriptor(1)[1] == 4.0f);
}

TEST_CASE("flatten of a 21x21 map yields 441 descriptors") {
    FeatureMap m;
    m.channels = 64;
    m.height = 21;
    m.width = 21;
    m.values.assign(static_cast<size_t>(64) * 21 * 21, 0.5f);
    CHECK(flatten_feature_map(m).size() == 441);
}

TEST_CASE("flatten single position") {
    FeatureMap m;
    m.channels = 1;
    m.height = 1;
    m.width = 1;
    m.values = {7.5f};
    const DescriptorSet d = flatten_feature_map(m);
    CHECK(d.size() == 1);
    CHECK(d.dim() == 1);
    CHECK(d.descriptor(0)[0] == 7.5f);
}

TEST_CASE("flatten preserves the multiset of values") {
    Rng rng(31);
    FeatureMap m;
    m.channels = 3;
    m.height = 4;
    m.width = 5;
    m.values.resize(60);
    for (auto& v : m.values) v = static_cast<float>(rng.next_normal());
    const DescriptorSet d = flatten_feature_map(m);
    std::multiset<float> in(m.values.begin(), m.values.end());
    std::multiset<float> out(d.raw().begin(), d.raw().end());
    CHECK(in == out);
}

TEST_CASE("ADMD round-trip preserves the dataset") {
    Rng rng(41);
    const fs::path p = temp_path("roundtrip.admd");
    for (int trial = 0; trial < 10; ++trial) {
        const LabeledDataset ds = random_dataset(rng);
        save_dataset(ds, p);
        CHECK(load_dataset(p) == ds);
    }
    fs::remove(p);
}

TEST_CASE("ADMD save-load-save is byte-identical") {
    Rng rng(43);
    const fs::path p1 = temp_path("bytes1.admd"), p2 = temp_path("bytes2.admd");
    for (int trial = 0; trial < 10; ++trial) {
        save_dataset(random_dataset(rng), p1);
        save_dataset(load_dataset(p1), p2);
        CHECK(read_bytes(p1) == read_bytes(p2));
    }
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("ADMD file size matches the format field widths") {
    // 1 class, 1 image, n=2, c=2: header 12 + class 8 + image 8 + 16 floats
    LabeledDataset ds;
    ds.classes.push_back({0, {DescriptorSet(2, 2, {1, 2, 3, 4})}});
    const fs::path p = temp_path("size.admd");
    save_dataset(ds, p);
    CHECK(fs::file_size(p) == 4 + 4 + 4 + (4 + 4) + (4 + 4 + 16));
    fs::remove(p);
}

TEST_CASE("ADMD bad magic raises FormatError") {
    const fs::path p = temp_path("magic.admd");
    write_bytes(p, std::string("XXXX") + std::string(16, '\0'));
    CHECK_THROWS_AS(load_dataset(p), FormatError);
    fs::remove(p);
}

TEST_CASE("ADMD truncation raises FormatError") {
    LabeledDataset ds;
    ds.classes.push_back({0, {DescriptorSet(5, 2, std::vector<float>(10, 1.0f))}});
    const fs::path p = temp_path("trunc.admd");
    save_dataset(ds, p);
    std::string bytes = read_bytes(p);
    // drop the last two descriptors' worth of floats
    bytes.resize(bytes.size() - 2 * 2 * 4);
    write_bytes(p, bytes);
    CHECK_THROWS_AS(load_dataset(p), FormatError);
    fs::remove(p);
}

TEST_CASE("ADMD mixed descriptor dims raise InconsistentDim") {
    // hand-build: 1 class, 2 images with c=2 then c=3
    std::string bytes;
    auto u32 = [&](uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    bytes += "ADMD";
    u32(1);  // version
    u32(1);  // classes
    u32(0);  // class id
    u32(2);  // images
    u32(1); u32(2); u32(0); u32(0);          // image 0: n=1 c=2, zeros
    u32(1); u32(3); u32(0); u32(0); u32(0);  // image 1: n=1 c=3
    const fs::path p = temp_path("mixed.admd");
    write_bytes(p, bytes);
    CHECK_THROWS_AS(load_dataset(p), InconsistentDimError);
    fs::remove(p);
}

TEST_CASE("save rejects an invalid dataset before writing") {
    LabeledDataset ds;
    ds.classes.push_back({0, {}});  // class with no images
    const fs::path p = temp_path("invalid.admd");
    CHECK_THROWS_AS(save_dataset(ds, p), InvalidSpecError);
    CHECK(!fs::exists(p));
}

TEST_CASE("synth is deterministic for identical spec and seed") {
    SynthSpec spec{3, 4, 8, 5, 2.0, CovKind::RandomSpd};
    const SynthResult a = synth_gaussian_dataset(spec, 99);
    const SynthResult b = synth_gaussian_dataset(spec, 99);
    CHECK(a.dataset == b.dataset);
    const SynthResult c = synth_gaussian_dataset(spec, 100);
    CHECK(a.dataset != c.dataset);
}

TEST_CASE("synth rejects non-positive counts") {
    CHECK_THROWS_AS(synth_gaussian_dataset(SynthSpec{0, 1, 1, 1, 0.0, CovKind::Isotropic}, 1),
                    InvalidSpecError);
    CHECK_THROWS_AS(synth_gaussian_dataset(SynthSpec{1, 1, 0, 1, 0.0, CovKind::Isotropic}, 1),
                    InvalidSpecError);
}

TEST_CASE("synth sample mean lands within Monte Carlo error") {
    // 1 class, isotropic, separation 0: mean must be within 3/sqrt(n) per coordinate
    SynthSpec spec{1, 1, 100000, 2, 0.0, CovKind::Isotropic};
    const SynthResult r = synth_gaussian_dataset(spec, 7);
    const DescriptorSet& d = r.dataset.classes[0].images[0];
    const int n = d.size();
    for (int j = 0; j < 2; ++j) {
        double sum = 0.0;
        for (int t = 0; t < n; ++t) sum += d.descriptor(t)[j];
        CHECK(std::abs(sum / n) <= 3.0 / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("synth sample covariance matches the generating covariance") {
    for (CovKind kind : {CovKind::Isotropic, CovKind::DiagonalRandom, CovKind::RandomSpd}) {
        SynthSpec spec{1, 1, 100000, 6, 1.0, kind};
        const SynthResult r = synth_gaussian_dataset(spec, 21);
        const GaussianStats stats = estimate_stats(r.dataset.classes[0].images[0], 0.0);
        const Mat& truth = r.class_params[0].cov;
        double err = 0.0, scale = 0.0;
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) {
                const double d = stats.cov(i, j) - truth(i, j);
                err += d * d;
                scale += truth(i, j) * truth(i, j);
            }
        CHECK(std::sqrt(err) <= 0.05 * std::sqrt(scale));
    }
}

TEST_CASE("synth separable classes are recovered by a Bayes-rule oracle") {
    // 5 classes, 16 dims, separation 10: classify one 5-way task of queries by
    // exact Gaussian likelihood under the generating parameters
    SynthSpec spec{5, 6, 8, 16, 10.0, CovKind::Isotropic};
    const SynthResult r = synth_gaussian_dataset(spec, 77);

    int correct = 0, total = 0;
    for (int ci = 0; ci < 5; ++ci)
        for (const auto& img : r.dataset.classes[ci].images) {
            // log N(x; mu_i, I) ranking reduces to nearest mean
            double ll_best = -1e300;
            int best = -1;
            for (int cand = 0; cand < 5; ++cand) {
                double ll = 0.0;
                for (int d = 0; d < img.size(); ++d)
                    for (int j = 0; j < 16; ++j) {
                        const double diff =
                            img.descriptor(d)[j] - r.class_params[cand].mean[j];
                        ll -= 0.5 * diff * diff;
                    }
                if (ll > ll_best) {
                    ll_best = ll;
                    best = cand;
                }
            }
            correct += (best == ci);
            ++total;
        }
    CHECK(static_cast<double>(correct) / total >= 0.99);
}

TEST_CASE("synth class means sit on the separation sphere") {
    SynthSpec spec{8, 1, 2, 10, 3.5, CovKind::Isotropic};
    const SynthResult r = synth_gaussian_dataset(spec, 55);
    for (const auto& p : r.class_params)
        CHECK(std::sqrt(norm2_sq(p.mean)) == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_SUITE_END();
