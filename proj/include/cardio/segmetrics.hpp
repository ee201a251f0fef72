#pragma once

// Overlap and surface-distance metrics between a reference and a predicted
// segmentation.
//
// Conventions:
//  - surface voxels are foreground voxels with at least one background
//    6-neighbour (4-neighbour when nz == 1); outside the grid is background;
//  - distances are exhaustive nearest-neighbour searches;
//  - HD95 is the max of the two directed 95th percentiles, each taken by
//    nearest rank: the ceil(0.95 n)-th smallest value.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cardio/error.hpp"
#include "cardio/mwt.hpp"
#include "cardio/volume.hpp"

namespace cardio {

struct SurfaceSet {
    std::vector<std::array<int, 3>> points;
    DistanceUnit unit = DistanceUnit::Voxel;
    std::array<double, 3> scale{1.0, 1.0, 1.0};  // mm per voxel in Millimetre mode, else 1
};

inline double dice(const BinaryMask& truth, const BinaryMask& pred) {
    require(truth.dims() == pred.dims(), Errc::InvalidArgument, "dice: mask dims differ");
    std::size_t both = 0, t = 0, p = 0;
    const auto a = truth.data();
    const auto b = pred.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        t += a[i];
        p += b[i];
        both += a[i] & b[i];
    }
    if (t + p == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(t + p);
}

inline SurfaceSet surface_points(const BinaryMask& mask, DistanceUnit unit = DistanceUnit::Voxel) {
    const auto& d = mask.dims();
    SurfaceSet s;
    s.unit = unit;
    if (unit == DistanceUnit::Millimetre) s.scale = {mask.spacing().dx, mask.spacing().dy, mask.spacing().dz};
    const bool planar = d.nz == 1;
    auto inside = [&](long x, long y, long z) {
        return x >= 0 && y >= 0 && z >= 0 && x < static_cast<long>(d.nx) && y < static_cast<long>(d.ny) &&
               z < static_cast<long>(d.nz) && mask.at(x, y, z);
    };
    for (std::size_t z = 0; z < d.nz; ++z) {
        for (std::size_t y = 0; y < d.ny; ++y) {
            for (std::size_t x = 0; x < d.nx; ++x) {
                if (!mask.at(x, y, z)) continue;
                const long X = static_cast<long>(x), Y = static_cast<long>(y), Z = static_cast<long>(z);
                bool boundary = !inside(X - 1, Y, Z) || !inside(X + 1, Y, Z) || !inside(X, Y - 1, Z) ||
                                !inside(X, Y + 1, Z);
                if (!planar) boundary = boundary || !inside(X, Y, Z - 1) || !inside(X, Y, Z + 1);
                if (boundary) s.points.push_back({static_cast<int>(x), static_cast<int>(y), static_cast<int>(z)});
            }
        }
    }
    require(!s.points.empty(), Errc::EmptySurface, "mask has no foreground voxels");
    return s;
}

namespace detail {

inline void check_surface_pair(const SurfaceSet& a, const SurfaceSet& b) {
    require(!a.points.empty() && !b.points.empty(), Errc::EmptySurface, "surface set is empty");
    require(a.unit == b.unit && a.scale == b.scale, Errc::InvalidArgument, "surface sets use different units");
}

}  // namespace detail

/// For each point of `from`, the distance to the nearest point of `to`.
inline std::vector<double> directed_distances(const SurfaceSet& from, const SurfaceSet& to) {
    detail::check_surface_pair(from, to);
    const auto [sx, sy, sz] = from.scale;
    std::vector<double> out;
    out.reserve(from.points.size());
    for (const auto& a : from.points) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : to.points) {
            const double dx = (a[0] - b[0]) * sx;
            const double dy = (a[1] - b[1]) * sy;
            const double dz = (a[2] - b[2]) * sz;
            best = std::min(best, dx * dx + dy * dy + dz * dz);
        }
        out.push_back(std::sqrt(best));
    }
    return out;
}

inline double asd(const SurfaceSet& t, const SurfaceSet& p) {
    const auto tp = directed_distances(t, p);
    const auto pt = directed_distances(p, t);
    // Each direction is summed on its own so swapping the arguments is bit-exact.
    double s_tp = 0.0, s_pt = 0.0;
    for (double d : tp) s_tp += d;
    for (double d : pt) s_pt += d;
    return (s_tp + s_pt) / static_cast<double>(tp.size() + pt.size());
}

/// Nearest-rank percentile of an unsorted sample (percentile in 1..100).
inline double nearest_rank(std::vector<double> values, int percentile) {
    require(!values.empty(), Errc::InvalidArgument, "percentile of an empty sample");
    require(percentile >= 1 && percentile <= 100, Errc::InvalidArgument, "percentile must be in 1..100");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    const std::size_t rank = std::max<std::size_t>(1, (static_cast<std::size_t>(percentile) * n + 99) / 100);
    return values[rank - 1];
}

inline double hausdorff(const SurfaceSet& t, const SurfaceSet& p, int percentile = 100) {
    require(percentile == 100 || percentile == 95, Errc::InvalidArgument, "hausdorff percentile must be 100 or 95");
    return std::max(nearest_rank(directed_distances(t, p), percentile),
                    nearest_rank(directed_distances(p, t), percentile));
}

struct ClassScore {
    TissueClass tissue = TissueClass::LV;
    double dice = 0.0;
    std::optional<double> hd95;  // empty when the class is absent from both volumes
    std::optional<double> asd;
    bool flagged = false;  // absent from exactly one volume; distances are worst case
};

struct SegScore {
    std::vector<ClassScore> classes;  // RV, MYO, LV
    double mean_dice = 0.0;
    std::optional<double> mean_hd95;
    std::optional<double> mean_asd;
    std::vector<std::string> qc;
};

inline SegScore score_case(const LabelVolume& truth, const LabelVolume& pred, DistanceUnit unit = DistanceUnit::Voxel) {
    require(truth.dims() == pred.dims(), Errc::InvalidArgument, "score_case: dims differ");
    require(truth.spacing() == pred.spacing(), Errc::InvalidArgument, "score_case: spacing differs");
    const auto& d = truth.dims();
    const auto& sp = truth.spacing();
    const bool mm = unit == DistanceUnit::Millimetre;
    const double ex = (static_cast<double>(d.nx) - 1.0) * (mm ? sp.dx : 1.0);
    const double ey = (static_cast<double>(d.ny) - 1.0) * (mm ? sp.dy : 1.0);
    const double ez = (static_cast<double>(d.nz) - 1.0) * (mm ? sp.dz : 1.0);
    const double diagonal = std::sqrt(ex * ex + ey * ey + ez * ez);

    SegScore out;
    double dice_sum = 0.0, hd_sum = 0.0, asd_sum = 0.0;
    std::size_t n_dist = 0;
    for (auto tissue : kForegroundClasses) {
        const auto tm = binary_mask(truth, tissue);
        const auto pm = binary_mask(pred, tissue);
        ClassScore cs;
        cs.tissue = tissue;
        cs.dice = dice(tm, pm);
        const bool t_empty = tm.empty();
        const bool p_empty = pm.empty();
        if (t_empty && p_empty) {
            out.qc.push_back(std::string(to_string(tissue)) + ": absent from both volumes, distances skipped");
        } else if (t_empty || p_empty) {
            cs.flagged = true;
            cs.hd95 = diagonal;
            cs.asd = diagonal;
            out.qc.push_back(std::string(to_string(tissue)) + ": absent from the " + (t_empty ? "truth" : "prediction") +
                             ", distances set to the volume diagonal");
        } else {
            const auto ts = surface_points(tm, unit);
            const auto ps = surface_points(pm, unit);
            cs.hd95 = hausdorff(ts, ps, 95);
            cs.asd = asd(ts, ps);
        }
        dice_sum += cs.dice;
        if (cs.hd95) {
            hd_sum += *cs.hd95;
            asd_sum += *cs.asd;
            ++n_dist;
        }
        out.classes.push_back(cs);
    }
    out.mean_dice = dice_sum / static_cast<double>(out.classes.size());
    if (n_dist > 0) {
        out.mean_hd95 = hd_sum / static_cast<double>(n_dist);
        out.mean_asd = asd_sum / static_cast<double>(n_dist);
    }
    return out;
}

}  // namespace cardio
