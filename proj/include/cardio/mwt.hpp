#pragma once

// Myocardial wall thickness. Contours come from label adjacency on each
// short-axis slice: inner = myocardium touching LV, outer = myocardium
// touching anything else (the slice border counts as outside). A pixel
// touching both belongs to the inner contour only.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cardio/error.hpp"
#include "cardio/stats.hpp"
#include "cardio/volume.hpp"

namespace cardio {

struct Pixel {
    int x = 0;
    int y = 0;
    auto operator<=>(const Pixel&) const = default;
};

struct ContourPair {
    std::vector<Pixel> inner;
    std::vector<Pixel> outer;
    double dx = 1.0;
    double dy = 1.0;
};

enum class ContourStatus { Ok, EmptySlice, NoInnerContour, NoOuterContour };

constexpr const char* to_string(ContourStatus s) {
    switch (s) {
        case ContourStatus::Ok: return "ok";
        case ContourStatus::EmptySlice: return "empty-slice";
        case ContourStatus::NoInnerContour: return "no-inner-contour";
        case ContourStatus::NoOuterContour: return "no-outer-contour";
    }
    return "?";
}

struct ContourExtraction {
    ContourStatus status = ContourStatus::Ok;
    ContourPair contours;
};

enum class DistanceUnit { Millimetre, Voxel };

struct MwtSliceResult {
    std::vector<double> distances;  // one per inner-contour pixel
    double mean = 0.0;
    double stdev = 0.0;
};

struct MwtFeatures {
    double max_of_means = 0.0;
    double stdev_of_means = 0.0;
    double mean_of_stdevs = 0.0;
    double stdev_of_stdevs = 0.0;
};

inline ContourExtraction extract_contours(const LabelSlice& s) {
    constexpr auto kMyo = code(TissueClass::Myocardium);
    constexpr auto kLv = code(TissueClass::LV);
    ContourExtraction out;
    out.contours.dx = s.dx;
    out.contours.dy = s.dy;

    bool any_myo = false;
    bool any_lv = false;
    const auto nx = static_cast<int>(s.nx);
    const auto ny = static_cast<int>(s.ny);
    for (int y = 0; y < ny; ++y) {
        for (int x = 0; x < nx; ++x) {
            const auto l = s.at(x, y);
            any_lv |= (l == kLv);
            if (l != kMyo) continue;
            any_myo = true;
            bool touches_lv = false;
            bool touches_outside = false;
            const int nbx[4] = {x - 1, x + 1, x, x};
            const int nby[4] = {y, y, y - 1, y + 1};
            for (int k = 0; k < 4; ++k) {
                if (nbx[k] < 0 || nbx[k] >= nx || nby[k] < 0 || nby[k] >= ny) {
                    touches_outside = true;
                    continue;
                }
                const auto n = s.at(nbx[k], nby[k]);
                if (n == kLv) touches_lv = true;
                else if (n != kMyo) touches_outside = true;
            }
            if (touches_lv) out.contours.inner.push_back({x, y});
            else if (touches_outside) out.contours.outer.push_back({x, y});
        }
    }
    if (!any_myo) out.status = ContourStatus::EmptySlice;
    else if (!any_lv || out.contours.inner.empty()) out.status = ContourStatus::NoInnerContour;
    else if (out.contours.outer.empty()) out.status = ContourStatus::NoOuterContour;
    return out;
}

/// For every inner pixel, the shortest distance to the outer contour (exhaustive search).
inline MwtSliceResult slice_mwt(const ContourPair& c, DistanceUnit unit = DistanceUnit::Millimetre) {
    require(!c.inner.empty() && !c.outer.empty(), Errc::NoContour, "wall thickness needs inner and outer contours");
    const double sx = unit == DistanceUnit::Millimetre ? c.dx : 1.0;
    const double sy = unit == DistanceUnit::Millimetre ? c.dy : 1.0;
    MwtSliceResult r;
    r.distances.reserve(c.inner.size());
    for (const auto& i : c.inner) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& e : c.outer) {
            const double ex = (i.x - e.x) * sx;
            const double ey = (i.y - e.y) * sy;
            best = std::min(best, ex * ex + ey * ey);
        }
        r.distances.push_back(std::sqrt(best));
    }
    r.mean = stats::mean(r.distances);
    r.stdev = stats::sample_stdev(r.distances);
    return r;
}

/// Long-axis aggregation of per-slice means and standard deviations.
inline MwtFeatures aggregate_mwt(std::span<const MwtSliceResult> slices) {
    require(!slices.empty(), Errc::NoMyocardium, "no slice with a measurable myocardial wall");
    std::vector<double> means, stdevs;
    for (const auto& s : slices) {
        means.push_back(s.mean);
        stdevs.push_back(s.stdev);
    }
    return {*std::max_element(means.begin(), means.end()), stats::sample_stdev(means), stats::mean(stdevs),
            stats::sample_stdev(stdevs)};
}

struct SliceSkip {
    std::size_t z = 0;
    ContourStatus reason = ContourStatus::Ok;
};

struct PhaseMwt {
    MwtFeatures features;
    std::vector<std::size_t> slice_index;  // z of each entry in `slices`
    std::vector<MwtSliceResult> slices;
    std::vector<SliceSkip> skipped;  // slices with myocardium but no usable contour pair
};

/// Wall thickness over all slices of a volume. Slices without myocardium are ignored silently.
inline PhaseMwt volume_mwt(const LabelVolume& v, DistanceUnit unit = DistanceUnit::Millimetre) {
    PhaseMwt out;
    for (std::size_t z = 0; z < v.dims().nz; ++z) {
        const auto ex = extract_contours(v.slice(z));
        if (ex.status == ContourStatus::EmptySlice) continue;
        if (ex.status != ContourStatus::Ok) {
            out.skipped.push_back({z, ex.status});
            continue;
        }
        out.slice_index.push_back(z);
        out.slices.push_back(slice_mwt(ex.contours, unit));
    }
    out.features = aggregate_mwt(out.slices);
    return out;
}

}  // namespace cardio
