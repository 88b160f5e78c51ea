#include "adm/descriptors.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "adm/rng.hpp"

namespace adm {

DescriptorSet::DescriptorSet(int n, int c, std::vector<float> data)
    : n_(n), c_(c), data_(std::move(data)) {
    if (n < 1 || c < 1) throw InvalidSpecError("DescriptorSet: n and c must be >= 1");
    if (data_.size() != static_cast<size_t>(n) * c)
        throw DimensionMismatchError("DescriptorSet: data size != n*c");
    for (float v : data_)
        if (!std::isfinite(v)) throw NonFiniteError("DescriptorSet: non-finite value");
}

int LabeledDataset::descriptor_dim() const {
    for (const auto& cl : classes)
        if (!cl.images.empty()) return cl.images.front().dim();
    return 0;
}

void LabeledDataset::validate() const {
    if (classes.empty()) throw InvalidSpecError("dataset: no classes");
    const int c = descriptor_dim();
    for (const auto& cl : classes) {
        if (cl.images.empty())
            throw InvalidSpecError("dataset: class " + std::to_string(cl.class_id) +
                                   " has no images");
        for (const auto& img : cl.images)
            if (img.dim() != c)
                throw InconsistentDimError("dataset: mixed descriptor dimensions");
    }
}

DescriptorSet flatten_feature_map(const FeatureMap& m) {
    if (m.channels < 1 || m.height < 1 || m.width < 1)
        throw InvalidSpecError("flatten_feature_map: dimensions must be positive");
    if (m.values.size() != static_cast<size_t>(m.channels) * m.height * m.width)
        throw DimensionMismatchError("flatten_feature_map: value count mismatch");
    const int n = m.height * m.width;
    std::vector<float> out(static_cast<size_t>(n) * m.channels);
    for (int row = 0; row < m.height; ++row)
        for (int col = 0; col < m.width; ++col) {
            const size_t base = static_cast<size_t>(row * m.width + col) * m.channels;
            for (int k = 0; k < m.channels; ++k) out[base + k] = m.at(k, row, col);
        }
    return DescriptorSet(n, m.channels, std::move(out));
}

Mat to_mat(const DescriptorSet& d) {
    Mat m(d.size(), d.dim());
    for (int i = 0; i < d.size(); ++i) {
        const float* src = d.descriptor(i);
        double* dst = m.row(i);
        for (int j = 0; j < d.dim(); ++j) dst[j] = static_cast<double>(src[j]);
    }
    return m;
}

DescriptorSet pool_descriptors(const std::vector<const DescriptorSet*>& sets) {
    if (sets.empty()) throw InvalidSpecError("pool_descriptors: empty list");
    const int c = sets.front()->dim();
    int n = 0;
    for (const auto* s : sets) {
        if (s->dim() != c) throw DimensionMismatchError("pool_descriptors: mixed dims");
        n += s->size();
    }
    std::vector<float> data;
    data.reserve(static_cast<size_t>(n) * c);
    for (const auto* s : sets) data.insert(data.end(), s->raw().begin(), s->raw().end());
    return DescriptorSet(n, c, std::move(data));
}

// ---- ADMD IO ----------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'A', 'D', 'M', 'D'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    bool exhausted() const { return pos >= buf.size(); }

    void need(size_t n) {
        if (pos + n > buf.size()) throw FormatError("ADMD: truncated file");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = static_cast<uint8_t>(buf[pos]) |
                     (static_cast<uint8_t>(buf[pos + 1]) << 8) |
                     (static_cast<uint8_t>(buf[pos + 2]) << 16) |
                     (static_cast<uint8_t>(buf[pos + 3]) << 24);
        pos += 4;
        return v;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace

LabeledDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!in.good() && !in.eof()) throw IoError("read failure on " + path.string());

    Reader r{buf};
    r.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw FormatError("ADMD: bad magic");
    r.pos = 4;
    if (r.u32() != kVersion) throw FormatError("ADMD: unsupported version");

    LabeledDataset ds;
    const uint32_t num_classes = r.u32();
    if (num_classes == 0) throw FormatError("ADMD: zero classes");
    int shared_c = -1;
    for (uint32_t ci = 0; ci < num_classes; ++ci) {
        LabeledClass cl;
        cl.class_id = r.u32();
        const uint32_t num_images = r.u32();
        if (num_images == 0) throw FormatError("ADMD: class with zero images");
        for (uint32_t ii = 0; ii < num_images; ++ii) {
            const uint32_t n = r.u32();
            const uint32_t c = r.u32();
            if (n == 0 || c == 0) throw FormatError("ADMD: zero-sized image");
            if (shared_c == -1) shared_c = static_cast<int>(c);
            else if (shared_c != static_cast<int>(c))
                throw InconsistentDimError("ADMD: mixed descriptor dimensions");
            std::vector<float> data(static_cast<size_t>(n) * c);
            for (auto& v : data) v = r.f32();
            cl.images.emplace_back(static_cast<int>(n), static_cast<int>(c), std::move(data));
        }
        ds.classes.push_back(std::move(cl));
    }
    if (!r.exhausted()) throw FormatError("ADMD: trailing bytes");
    return ds;
}

void save_dataset(const LabeledDataset& dataset, const std::filesystem::path& path) {
    dataset.validate();

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<uint32_t>(dataset.classes.size()));
    for (const auto& cl : dataset.classes) {
        put_u32(out, cl.class_id);
        put_u32(out, static_cast<uint32_t>(cl.images.size()));
        for (const auto& img : cl.images) {
            put_u32(out, static_cast<uint32_t>(img.size()));
            put_u32(out, static_cast<uint32_t>(img.dim()));
            for (float v : img.raw()) put_f32(out, v);
        }
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f.good()) throw IoError("write failure on " + path.string());
}

// ---- synthetic datasets ------------------------------------------------------

namespace {

Vec random_unit_vector(int dim, Rng& rng) {
    Vec v(dim);
    double norm_sq;
    do {
        for (auto& x : v) x = rng.next_normal();
        norm_sq = norm2_sq(v);
    } while (norm_sq < 1e-24);
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& x : v) x *= inv;
    return v;
}

// log-uniform in [0.25, 4]
double random_eigenvalue(Rng& rng) {
    const double lo = std::log(0.25), hi = std::log(4.0);
    return std::exp(lo + (hi - lo) * rng.next_double());
}

// Random orthogonal matrix via Gram-Schmidt on Gaussian columns, diagonal
// sign fixed positive for determinism.
Mat random_orthogonal(int dim, Rng& rng) {
    Mat q(dim, dim);
    for (int j = 0; j < dim; ++j) {
        Vec col(dim);
        for (;;) {
            for (auto& x : col) x = rng.next_normal();
            for (int prev = 0; prev < j; ++prev) {
                double proj = 0.0;
                for (int i = 0; i < dim; ++i) proj += q(i, prev) * col[i];
                for (int i = 0; i < dim; ++i) col[i] -= proj * q(i, prev);
            }
            const double nsq = norm2_sq(col);
            if (nsq > 1e-12) {
                double inv = 1.0 / std::sqrt(nsq);
                if (col[j] < 0.0) inv = -inv;
                for (int i = 0; i < dim; ++i) q(i, j) = col[i] * inv;
                break;
            }
        }
    }
    return q;
}

Mat make_covariance(const SynthSpec& spec, Rng& rng) {
    const int c = spec.dim;
    switch (spec.cov) {
        case CovKind::Isotropic:
            return Mat::identity(c);
        case CovKind::DiagonalRandom: {
            Mat m(c, c);
            for (int i = 0; i < c; ++i) m(i, i) = random_eigenvalue(rng);
            return m;
        }
        case CovKind::RandomSpd: {
            Mat q = random_orthogonal(c, rng);
            Vec lam(c);
            for (auto& l : lam) l = random_eigenvalue(rng);
            Mat scaled(c, c);
            for (int i = 0; i < c; ++i)
                for (int j = 0; j < c; ++j) scaled(i, j) = q(i, j) * lam[j];
            Mat cov = matmul(scaled, transpose(q));
            return SymMatrix::symmetrized(cov).mat();
        }
    }
    throw InvalidSpecError("unknown covariance kind");
}

}  // namespace

SynthResult synth_gaussian_dataset(const SynthSpec& spec, uint64_t seed) {
    if (spec.classes < 1 || spec.images_per_class < 1 || spec.descriptors_per_image < 1 ||
        spec.dim < 1)
        throw InvalidSpecError("synth: counts must be positive");
    if (spec.separation < 0.0) throw InvalidSpecError("synth: separation must be >= 0");

    Rng rng = Rng::stream(seed, 0);
    SynthResult result;

    // Draw all class parameters first, then descriptors class by class; the
    // order is fixed so identical (spec, seed) give identical bytes.
    for (int i = 0; i < spec.classes; ++i) {
        SynthClassParams p;
        if (spec.separation > 0.0) {
            p.mean = random_unit_vector(spec.dim, rng);
            for (auto& x : p.mean) x *= spec.separation;
        } else {
            p.mean.assign(spec.dim, 0.0);
        }
        p.cov = make_covariance(spec, rng);
        result.class_params.push_back(std::move(p));
    }

    std::vector<LowerTriangular> factors;
    factors.reserve(spec.classes);
    for (const auto& p : result.class_params) factors.push_back(cholesky(SymMatrix(p.cov)));

    const int n = spec.descriptors_per_image, c = spec.dim;
    for (int ci = 0; ci < spec.classes; ++ci) {
        LabeledClass cl;
        cl.class_id = static_cast<uint32_t>(ci);
        const auto& mean = result.class_params[ci].mean;
        const auto& l = factors[ci];
        for (int ii = 0; ii < spec.images_per_class; ++ii) {
            std::vector<float> data(static_cast<size_t>(n) * c);
            Vec z(c);
            for (int t = 0; t < n; ++t) {
                for (auto& x : z) x = rng.next_normal();
                for (int row = 0; row < c; ++row) {
                    double s = mean[row];
                    for (int k = 0; k <= row; ++k) s += l(row, k) * z[k];
                    data[static_cast<size_t>(t) * c + row] = static_cast<float>(s);
                }
            }
            cl.images.emplace_back(n, c, std::move(data));
        }
        result.dataset.classes.push_back(std::move(cl));
    }
    return result;
}

CovKind parse_cov_kind(const std::string& name) {
    if (name == "isotropic") return CovKind::Isotropic;
    if (name == "diag-random") return CovKind::DiagonalRandom;
    if (name == "random-spd") return CovKind::RandomSpd;
    throw InvalidSpecError("unknown covariance kind: " + name);
}

}  // namespace adm
