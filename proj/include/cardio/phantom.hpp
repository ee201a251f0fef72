#pragma once

// Synthetic short-axis heart phantoms: an LV disc, a concentric myocardial
// annulus and an RV crescent (a disc centred on the epicardial boundary,
// minus the epicardial disc), stacked over z. The
// "predicted" volumes are the truth with seeded boundary label flips.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cardio/disease.hpp"
#include "cardio/error.hpp"
#include "cardio/ingest.hpp"
#include "cardio/rng.hpp"
#include "cardio/volume.hpp"

namespace cardio {

struct PhantomPhase {
    double lv_radius = 5.0;                  // voxels
    std::vector<double> thickness{3.0};      // per slice in voxels; one entry broadcasts
    double thickness_modulation = 0.0;       // relative amplitude of cos(theta) wall variation
    double rv_radius = 0.0;                  // voxels, 0 disables the RV

    [[nodiscard]] double thickness_at(std::size_t z) const {
        return thickness.size() == 1 ? thickness.front() : thickness[z];
    }
    [[nodiscard]] double max_epicardial_radius() const {
        const double t = *std::max_element(thickness.begin(), thickness.end());
        return lv_radius + t * (1.0 + std::abs(thickness_modulation));
    }
};

struct PhantomSpec {
    std::string case_id = "phantom";
    Dims dims{32, 32, 1};
    VoxelSpacing spacing{1.0, 1.0, 1.0};
    PhantomPhase ed;
    PhantomPhase es;
    double noise = 0.0;  // probability of flipping a boundary voxel in the prediction
    double height_cm = 170.0;
    double weight_kg = 70.0;
    int ed_frame = 1;
    int es_frame = 12;
    std::optional<DiseaseClass> group;
};

namespace detail {

inline void validate_phase(const PhantomSpec& s, const PhantomPhase& p, const char* name) {
    const std::string where = std::string("phantom ") + name + ": ";
    require(p.lv_radius > 0.0, Errc::InvalidSpec, where + "LV radius must be positive");
    require(!p.thickness.empty() && (p.thickness.size() == 1 || p.thickness.size() == s.dims.nz),
            Errc::InvalidSpec, where + "thickness profile needs 1 or nz entries");
    for (double t : p.thickness) require(t > 0.0, Errc::InvalidSpec, where + "thickness must be positive");
    require(std::abs(p.thickness_modulation) < 1.0, Errc::InvalidSpec, where + "modulation must be in (-1, 1)");
    require(p.rv_radius >= 0.0, Errc::InvalidSpec, where + "RV radius must be non-negative");
    const double cx = (static_cast<double>(s.dims.nx) - 1.0) / 2.0;
    const double cy = (static_cast<double>(s.dims.ny) - 1.0) / 2.0;
    const double epi = p.max_epicardial_radius();
    require(epi + 1.0 <= std::min(cx, cy), Errc::InvalidSpec, where + "annulus does not fit inside dims");
    if (p.rv_radius > 0.0) {
        const double rv_center = cx - epi;
        require(rv_center - p.rv_radius >= 0.0 && p.rv_radius + 1.0 <= cy, Errc::InvalidSpec,
                where + "RV does not fit inside dims");
    }
}

inline LabelVolume rasterize(const PhantomSpec& s, const PhantomPhase& p) {
    LabelVolume v(s.dims, s.spacing);
    const double cx = (static_cast<double>(s.dims.nx) - 1.0) / 2.0;
    const double cy = (static_cast<double>(s.dims.ny) - 1.0) / 2.0;
    const double rv_cx = cx - p.max_epicardial_radius();
    for (std::size_t z = 0; z < s.dims.nz; ++z) {
        const double t = p.thickness_at(z);
        for (std::size_t y = 0; y < s.dims.ny; ++y) {
            for (std::size_t x = 0; x < s.dims.nx; ++x) {
                const double ddx = static_cast<double>(x) - cx;
                const double ddy = static_cast<double>(y) - cy;
                const double r = std::hypot(ddx, ddy);
                const double wall = t * (1.0 + p.thickness_modulation * std::cos(std::atan2(ddy, ddx)));
                if (r <= p.lv_radius) {
                    v.set(x, y, z, TissueClass::LV);
                } else if (r <= p.lv_radius + wall) {
                    v.set(x, y, z, TissueClass::Myocardium);
                } else if (p.rv_radius > 0.0 &&
                           std::hypot(static_cast<double>(x) - rv_cx, ddy) <= p.rv_radius) {
                    v.set(x, y, z, TissueClass::RV);
                }
            }
        }
    }
    return v;
}

/// Each in-plane boundary voxel takes the label of a random differing
/// 4-neighbour with probability `noise`. Decisions read the unperturbed input.
inline LabelVolume perturb_boundary(const LabelVolume& truth, double noise, Rng& rng) {
    if (noise <= 0.0) return truth;
    const auto& d = truth.dims();
    std::vector<std::uint8_t> out(truth.data().begin(), truth.data().end());
    for (std::size_t z = 0; z < d.nz; ++z) {
        for (std::size_t y = 0; y < d.ny; ++y) {
            for (std::size_t x = 0; x < d.nx; ++x) {
                const std::uint8_t self = truth.at(x, y, z);
                std::uint8_t candidates[4];
                std::size_t n = 0;
                auto consider = [&](std::size_t nx, std::size_t ny) {
                    const std::uint8_t l = truth.at(nx, ny, z);
                    if (l != self) candidates[n++] = l;
                };
                if (x > 0) consider(x - 1, y);
                if (x + 1 < d.nx) consider(x + 1, y);
                if (y > 0) consider(x, y - 1);
                if (y + 1 < d.ny) consider(x, y + 1);
                if (n == 0) continue;
                const double u = rng.uniform();
                const std::size_t pick = rng.index(n);
                if (u < noise) out[d.index(x, y, z)] = candidates[pick];
            }
        }
    }
    return LabelVolume(d, truth.spacing(), std::move(out));
}

}  // namespace detail

inline CaseRecord generate_phantom(const PhantomSpec& spec_in, std::uint64_t seed) {
    PhantomSpec spec = spec_in;
    // Keep spacing float32-exact so a NIfTI round trip is lossless.
    spec.spacing = {static_cast<float>(spec.spacing.dx), static_cast<float>(spec.spacing.dy),
                    static_cast<float>(spec.spacing.dz)};
    require(spec.spacing.valid(), Errc::InvalidSpec, "phantom spacing must be positive");
    require(spec.dims.count() > 0, Errc::InvalidSpec, "phantom dims must be non-zero");
    require(spec.noise >= 0.0 && spec.noise <= 1.0, Errc::InvalidSpec, "noise must be in [0, 1]");
    require(spec.height_cm > 0.0 && spec.weight_kg > 0.0, Errc::InvalidSpec, "height and weight must be positive");
    require(spec.ed_frame != spec.es_frame, Errc::InvalidSpec, "ED and ES frames must differ");
    detail::validate_phase(spec, spec.ed, "ED");
    detail::validate_phase(spec, spec.es, "ES");

    CaseRecord rec;
    rec.metadata = {spec.case_id, spec.height_cm, spec.weight_kg, spec.ed_frame, spec.es_frame, spec.group};
    rec.ed_truth = detail::rasterize(spec, spec.ed);
    rec.es_truth = detail::rasterize(spec, spec.es);
    Rng ed_rng(derive_seed(seed, 0));
    Rng es_rng(derive_seed(seed, 1));
    rec.ed = detail::perturb_boundary(*rec.ed_truth, spec.noise, ed_rng);
    rec.es = detail::perturb_boundary(*rec.es_truth, spec.noise, es_rng);
    return rec;
}

// ---------------------------------------------------------------------------
// Disease-shaped phantoms. Base geometry per class (voxels, ED -> ES):
//   NOR  LV 10 -> 7,  wall 3 -> 4
//   MINF LV 12 -> 10, wall 3 -> 3.3, cos(theta) wall modulation 0.5
//   DCM  LV 14 -> 13, wall 2 -> 2.2
//   HCM  LV 8 -> 4,   wall 6 -> 8
//   ARV  as NOR with an enlarged RV (13 -> 11 instead of 8 -> 5)
// Every radius and thickness is scaled by its own factor in [0.95, 1.05].

inline constexpr Dims kDiseasePhantomDims{64, 64, 8};
inline constexpr double kDiseasePhantomNoise = 0.02;

inline PhantomSpec disease_phantom_spec(DiseaseClass group, const std::string& case_id, std::uint64_t seed) {
    struct Shape {
        double lv_ed, lv_es, wall_ed, wall_es, modulation, rv_ed, rv_es;
    };
    Shape b{};
    switch (group) {
        case DiseaseClass::NOR: b = {10, 7, 3, 4, 0, 8, 5}; break;
        case DiseaseClass::MINF: b = {12, 10, 3, 3.3, 0.5, 8, 5}; break;
        case DiseaseClass::DCM: b = {14, 13, 2, 2.2, 0, 8, 6}; break;
        case DiseaseClass::HCM: b = {8, 4, 6, 8, 0, 8, 5}; break;
        case DiseaseClass::ARV: b = {10, 7, 3, 4, 0, 13, 11}; break;
    }
    Rng rng(seed);
    auto jitter = [&](double v) { return v * rng.uniform(0.95, 1.05); };
    PhantomSpec s;
    s.case_id = case_id;
    s.dims = kDiseasePhantomDims;
    s.spacing = {1.5, 1.5, 8.0};
    s.noise = kDiseasePhantomNoise;
    s.ed = {jitter(b.lv_ed), {jitter(b.wall_ed)}, b.modulation, jitter(b.rv_ed)};
    s.es = {jitter(b.lv_es), {jitter(b.wall_es)}, b.modulation, jitter(b.rv_es)};
    s.height_cm = rng.uniform(155.0, 185.0);
    s.weight_kg = rng.uniform(55.0, 95.0);
    s.group = group;
    return s;
}

/// `per_class` cases of each class, ids "<prefix>NNN" numbered in class-interleaved order.
inline std::vector<CaseRecord> disease_phantom_corpus(std::size_t per_class, std::uint64_t seed,
                                                      const std::string& prefix = "case") {
    std::vector<CaseRecord> out;
    for (std::size_t i = 0; i < per_class * kDiseaseClassCount; ++i) {
        const auto group = disease_from_index(i % kDiseaseClassCount);
        std::string num = std::to_string(i + 1);
        num.insert(0, num.size() < 3 ? 3 - num.size() : 0, '0');
        const auto spec = disease_phantom_spec(group, prefix + num, derive_seed(seed, 2 * i));
        out.push_back(generate_phantom(spec, derive_seed(seed, 2 * i + 1)));
    }
    return out;
}

}  // namespace cardio
