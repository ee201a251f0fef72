#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cardio/error.hpp"

namespace cardio {

/// Physical voxel size in mm. dz is the slice spacing.
struct VoxelSpacing {
    double dx = 1.0;
    double dy = 1.0;
    double dz = 1.0;

    [[nodiscard]] bool valid() const {
        auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
        return ok(dx) && ok(dy) && ok(dz);
    }
    [[nodiscard]] double voxel_mm3() const { return dx * dy * dz; }
    bool operator==(const VoxelSpacing&) const = default;
};

enum class TissueClass : std::uint8_t { Background = 0, RV = 1, Myocardium = 2, LV = 3 };

inline constexpr std::size_t kTissueClassCount = 4;
inline constexpr std::array<TissueClass, 3> kForegroundClasses = {
    TissueClass::RV, TissueClass::Myocardium, TissueClass::LV};

constexpr std::uint8_t code(TissueClass c) { return static_cast<std::uint8_t>(c); }

constexpr const char* to_string(TissueClass c) {
    switch (c) {
        case TissueClass::Background: return "BG";
        case TissueClass::RV: return "RV";
        case TissueClass::Myocardium: return "MYO";
        case TissueClass::LV: return "LV";
    }
    return "?";
}

enum class CardiacPhase : std::uint8_t { ED, ES };

constexpr const char* to_string(CardiacPhase p) { return p == CardiacPhase::ED ? "ED" : "ES"; }

struct Dims {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nz = 0;

    [[nodiscard]] std::size_t count() const { return nx * ny * nz; }
    [[nodiscard]] std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return x + nx * (y + ny * z);
    }
    bool operator==(const Dims&) const = default;
};

/// Read-only 2D view of one z-slice of a label volume.
struct LabelSlice {
    std::size_t nx = 0;
    std::size_t ny = 0;
    double dx = 1.0;
    double dy = 1.0;
    std::span<const std::uint8_t> labels;

    [[nodiscard]] std::uint8_t at(std::size_t x, std::size_t y) const { return labels[x + nx * y]; }
};

/// Tissue labels on a regular grid, x fastest and z slowest.
class LabelVolume {
public:
    LabelVolume() = default;

    LabelVolume(Dims dims, VoxelSpacing spacing, std::vector<std::uint8_t> data)
        : dims_(dims), spacing_(spacing), data_(std::move(data)) {
        require(spacing_.valid(), Errc::InvalidArgument, "voxel spacing must be positive and finite");
        require(data_.size() == dims_.count(), Errc::LengthMismatch,
                "label data has " + std::to_string(data_.size()) + " values, dims need " +
                    std::to_string(dims_.count()));
        for (auto v : data_)
            require(v < kTissueClassCount, Errc::InvalidLabel,
                    "label value " + std::to_string(v) + " is not a tissue class");
    }

    /// Background-filled volume.
    LabelVolume(Dims dims, VoxelSpacing spacing)
        : LabelVolume(dims, spacing, std::vector<std::uint8_t>(dims.count(), 0)) {}

    [[nodiscard]] const Dims& dims() const { return dims_; }
    [[nodiscard]] const VoxelSpacing& spacing() const { return spacing_; }
    [[nodiscard]] std::span<const std::uint8_t> data() const { return data_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }

    [[nodiscard]] std::uint8_t at(std::size_t x, std::size_t y, std::size_t z) const {
        return data_[dims_.index(x, y, z)];
    }
    void set(std::size_t x, std::size_t y, std::size_t z, TissueClass c) {
        data_[dims_.index(x, y, z)] = code(c);
    }

    [[nodiscard]] LabelSlice slice(std::size_t z) const {
        const std::size_t n = dims_.nx * dims_.ny;
        return {dims_.nx, dims_.ny, spacing_.dx, spacing_.dy,
                std::span<const std::uint8_t>(data_).subspan(z * n, n)};
    }

    [[nodiscard]] std::uint8_t max_label() const {
        std::uint8_t m = 0;
        for (auto v : data_) m = v > m ? v : m;
        return m;
    }

    [[nodiscard]] std::size_t count(TissueClass c) const {
        std::size_t n = 0;
        for (auto v : data_) n += (v == code(c));
        return n;
    }

    bool operator==(const LabelVolume&) const = default;

private:
    Dims dims_;
    VoxelSpacing spacing_;
    std::vector<std::uint8_t> data_;
};

/// Per-voxel class probabilities, stored voxel-major (all classes of voxel 0, then voxel 1, ...).
class ProbabilityMap {
public:
    static constexpr double kSimplexTolerance = 1e-6;

    ProbabilityMap() = default;

    ProbabilityMap(Dims dims, std::size_t classes, std::vector<double> data)
        : dims_(dims), classes_(classes), data_(std::move(data)) {
        require(classes_ >= 2, Errc::InvalidArgument, "probability map needs at least 2 classes");
        require(data_.size() == dims_.count() * classes_, Errc::LengthMismatch,
                "probability data length does not match dims x classes");
        for (std::size_t v = 0; v < dims_.count(); ++v) {
            double sum = 0.0;
            for (std::size_t c = 0; c < classes_; ++c) {
                const double p = data_[v * classes_ + c];
                require(std::isfinite(p) && p >= 0.0 && p <= 1.0, Errc::InvalidArgument,
                        "probability outside [0,1] at voxel " + std::to_string(v));
                sum += p;
            }
            require(std::abs(sum - 1.0) <= kSimplexTolerance, Errc::InvalidArgument,
                    "probabilities at voxel " + std::to_string(v) + " do not sum to 1");
        }
    }

    [[nodiscard]] const Dims& dims() const { return dims_; }
    [[nodiscard]] std::size_t classes() const { return classes_; }
    [[nodiscard]] std::size_t voxels() const { return dims_.count(); }
    [[nodiscard]] std::span<const double> data() const { return data_; }
    [[nodiscard]] std::span<const double> voxel(std::size_t v) const {
        return std::span<const double>(data_).subspan(v * classes_, classes_);
    }
    [[nodiscard]] bool same_shape(const ProbabilityMap& o) const {
        return dims_ == o.dims_ && classes_ == o.classes_;
    }

    bool operator==(const ProbabilityMap&) const = default;

private:
    Dims dims_;
    std::size_t classes_ = 0;
    std::vector<double> data_;
};

/// Boolean mask; a 2D mask is a volume with nz = 1.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(Dims dims, VoxelSpacing spacing, std::vector<std::uint8_t> data)
        : dims_(dims), spacing_(spacing), data_(std::move(data)) {
        require(data_.size() == dims_.count(), Errc::LengthMismatch, "mask data length does not match dims");
        for (auto& v : data_) v = v ? 1 : 0;
    }
    BinaryMask(Dims dims, VoxelSpacing spacing)
        : dims_(dims), spacing_(spacing), data_(dims.count(), 0) {}

    [[nodiscard]] const Dims& dims() const { return dims_; }
    [[nodiscard]] const VoxelSpacing& spacing() const { return spacing_; }
    [[nodiscard]] std::span<const std::uint8_t> data() const { return data_; }

    [[nodiscard]] bool at(std::size_t x, std::size_t y, std::size_t z) const {
        return data_[dims_.index(x, y, z)] != 0;
    }
    void set(std::size_t x, std::size_t y, std::size_t z, bool on = true) {
        data_[dims_.index(x, y, z)] = on ? 1 : 0;
    }
    [[nodiscard]] std::size_t count() const {
        std::size_t n = 0;
        for (auto v : data_) n += v;
        return n;
    }
    [[nodiscard]] bool empty() const { return count() == 0; }

    bool operator==(const BinaryMask&) const = default;

private:
    Dims dims_;
    VoxelSpacing spacing_;
    std::vector<std::uint8_t> data_;
};

inline ProbabilityMap one_hot(const LabelVolume& v, std::size_t classes) {
    require(classes > v.max_label(), Errc::InvalidArgument,
            "one_hot: class count " + std::to_string(classes) + " does not exceed max label " +
                std::to_string(v.max_label()));
    std::vector<double> p(v.size() * classes, 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) p[i * classes + v.data()[i]] = 1.0;
    return ProbabilityMap(v.dims(), classes, std::move(p));
}

/// Most probable class per voxel; ties go to the lowest class code.
inline std::size_t argmax(std::span<const double> probs) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.size(); ++c)
        if (probs[c] > probs[best]) best = c;
    return best;
}

inline LabelVolume argmax_labels(const ProbabilityMap& p, VoxelSpacing spacing = {}) {
    require(p.classes() <= kTissueClassCount, Errc::InvalidArgument,
            "argmax_labels: more classes than tissue codes");
    std::vector<std::uint8_t> labels(p.voxels());
    for (std::size_t v = 0; v < p.voxels(); ++v) labels[v] = static_cast<std::uint8_t>(argmax(p.voxel(v)));
    return LabelVolume(p.dims(), spacing, std::move(labels));
}

inline BinaryMask binary_mask(const LabelVolume& v, TissueClass c) {
    std::vector<std::uint8_t> m(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) m[i] = v.data()[i] == code(c);
    return BinaryMask(v.dims(), v.spacing(), std::move(m));
}

}  // namespace cardio
