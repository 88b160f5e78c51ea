#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adm/linalg.hpp"
#include "adm/matrix.hpp"

namespace adm {

/// c x h x w feature tensor, values stored channel-major ([c][h][w]).
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> values;

    float at(int ch, int row, int col) const {
        return values[(static_cast<size_t>(ch) * height + row) * width + col];
    }
};

/// Ordered set of n local descriptors of dimension c. Storage is float32 to
/// match the on-disk format bit for bit; all statistics are computed in
/// double precision downstream.
class DescriptorSet {
public:
    DescriptorSet(int n, int c, std::vector<float> data);

    int size() const { return n_; }
    int dim() const { return c_; }
    const float* descriptor(int i) const { return data_.data() + static_cast<size_t>(i) * c_; }
    const std::vector<float>& raw() const { return data_; }

    bool operator==(const DescriptorSet& o) const = default;

private:
    int n_;
    int c_;
    std::vector<float> data_;
};

struct LabeledClass {
    uint32_t class_id = 0;
    std::vector<DescriptorSet> images;

    bool operator==(const LabeledClass& o) const = default;
};

struct LabeledDataset {
    std::vector<LabeledClass> classes;

    int descriptor_dim() const;
    /// Throws InvalidSpecError on empty classes or mixed descriptor dims.
    void validate() const;

    bool operator==(const LabeledDataset& o) const = default;
};

/// Unrolls a feature map into h*w descriptors: flat index row*w + col holds
/// component k = values[k][row][col].
DescriptorSet flatten_feature_map(const FeatureMap& m);

/// Lift to double precision, one descriptor per row.
Mat to_mat(const DescriptorSet& d);

/// Concatenate sets (shared dim) into one set, in argument order.
DescriptorSet pool_descriptors(const std::vector<const DescriptorSet*>& sets);

// ---- ADMD container (little-endian binary) ---------------------------------
//
//   magic "ADMD" | version u32 = 1 | num_classes u32
//   per class:  class_id u32 | num_images u32
//   per image:  n u32 | c u32 | n*c float32, descriptor-major
LabeledDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const LabeledDataset& dataset, const std::filesystem::path& path);

// ---- synthetic Gaussian-class datasets --------------------------------------

enum class CovKind { Isotropic, DiagonalRandom, RandomSpd };

struct SynthSpec {
    int classes = 0;
    int images_per_class = 0;
    int descriptors_per_image = 0;
    int dim = 0;
    double separation = 0.0;  // class means drawn uniformly on a sphere of this radius
    CovKind cov = CovKind::Isotropic;
};

struct SynthClassParams {
    Vec mean;
    Mat cov;  // the true generating covariance (SPD)
};

struct SynthResult {
    LabeledDataset dataset;
    std::vector<SynthClassParams> class_params;  // generating parameters, for oracles
};

/// Deterministic for a given (spec, seed): identical inputs produce byte-identical
/// datasets. Class i draws its descriptors i.i.d. from N(mean_i, cov_i).
SynthResult synth_gaussian_dataset(const SynthSpec& spec, uint64_t seed);

CovKind parse_cov_kind(const std::string& name);

}  // namespace adm
