#pragma once

// Agreement between automatically derived and reference measurements:
// Bland-Altman bias and limits of agreement, Pearson correlation, and an
// ordinary least-squares fit of auto = slope * ref + intercept.

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "cardio/error.hpp"

namespace cardio {

inline constexpr double kLoaMultiplier = 1.96;

struct AgreementResult {
    std::size_t n = 0;
    double bias = 0.0;
    double sd_diff = 0.0;
    double loa_low = 0.0;
    double loa_high = 0.0;
    // Undefined when the reference (or, for r, either series) has zero variance.
    std::optional<double> pearson_r;
    std::optional<double> slope;
    std::optional<double> intercept;
};

namespace detail {

inline void check_series(std::span<const double> a, std::span<const double> r) {
    require(a.size() == r.size(), Errc::InvalidArgument, "agreement: series lengths differ");
    require(a.size() >= 2, Errc::InvalidArgument, "agreement: need at least 2 paired values");
    for (std::size_t i = 0; i < a.size(); ++i)
        require(std::isfinite(a[i]) && std::isfinite(r[i]), Errc::InvalidArgument, "agreement: non-finite value");
}

}  // namespace detail

inline AgreementResult bland_altman(std::span<const double> automatic, std::span<const double> reference) {
    detail::check_series(automatic, reference);
    const std::size_t n = automatic.size();
    const double nd = static_cast<double>(n);

    AgreementResult out;
    out.n = n;
    double dsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) dsum += automatic[i] - reference[i];
    out.bias = dsum / nd;
    double dss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = (automatic[i] - reference[i]) - out.bias;
        dss += e * e;
    }
    out.sd_diff = std::sqrt(dss / (nd - 1.0));
    out.loa_low = out.bias - kLoaMultiplier * out.sd_diff;
    out.loa_high = out.bias + kLoaMultiplier * out.sd_diff;

    double asum = 0.0, rsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        asum += automatic[i];
        rsum += reference[i];
    }
    const double amean = asum / nd;
    const double rmean = rsum / nd;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = reference[i] - rmean;
        const double y = automatic[i] - amean;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    if (sxx > 0.0) {
        out.slope = sxy / sxx;
        out.intercept = amean - *out.slope * rmean;
        if (syy > 0.0) out.pearson_r = sxy / std::sqrt(sxx * syy);
    }
    return out;
}

/// Fraction of pairs whose difference lies inside the limits of agreement.
inline double percent_within_loa(std::span<const double> automatic, std::span<const double> reference) {
    const auto ba = bland_altman(automatic, reference);
    std::size_t inside = 0;
    for (std::size_t i = 0; i < automatic.size(); ++i) {
        const double d = automatic[i] - reference[i];
        inside += (d >= ba.loa_low && d <= ba.loa_high);
    }
    return static_cast<double>(inside) / static_cast<double>(automatic.size());
}

struct BlandAltmanPoint {
    double mean = 0.0;
    double difference = 0.0;
};

inline std::vector<BlandAltmanPoint> bland_altman_points(std::span<const double> automatic,
                                                         std::span<const double> reference) {
    detail::check_series(automatic, reference);
    std::vector<BlandAltmanPoint> pts;
    for (std::size_t i = 0; i < automatic.size(); ++i)
        pts.push_back({(automatic[i] + reference[i]) / 2.0, automatic[i] - reference[i]});
    return pts;
}

}  // namespace cardio
