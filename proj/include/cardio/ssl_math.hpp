#pragma once

// Forward evaluation of the semi-supervised segmentation losses: soft Dice
// against labels, temperature sharpening into pseudo-labels, and the
// cross-decoder MSE consistency term over three decoder outputs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "cardio/error.hpp"
#include "cardio/volume.hpp"

namespace cardio::ssl {

inline constexpr double kDiceSmoothing = 1e-5;

struct SharpenConfig {
    double temperature = 0.1;
};

struct SharpenResult {
    ProbabilityMap map;
    std::size_t fallback_voxels = 0;  // voxels replaced by a one-hot argmax
};

/// p_c^(1/T) / sum_k p_k^(1/T), evaluated relative to the voxel maximum.
inline SharpenResult sharpen_checked(const ProbabilityMap& p, SharpenConfig cfg = {}) {
    require(std::isfinite(cfg.temperature) && cfg.temperature > 0.0, Errc::InvalidArgument,
            "sharpening temperature must be positive");
    if (cfg.temperature == 1.0) return {p, 0};
    const std::size_t k = p.classes();
    const double power = 1.0 / cfg.temperature;
    std::vector<double> out(p.data().size());
    std::size_t fallback = 0;
    for (std::size_t v = 0; v < p.voxels(); ++v) {
        const auto in = p.voxel(v);
        const std::size_t top = argmax(in);
        const double peak = in[top];
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            out[v * k + c] = peak > 0.0 ? std::pow(in[c] / peak, power) : 0.0;
            sum += out[v * k + c];
        }
        if (!(sum > 0.0) || !std::isfinite(sum)) {
            ++fallback;
            for (std::size_t c = 0; c < k; ++c) out[v * k + c] = c == top ? 1.0 : 0.0;
            continue;
        }
        for (std::size_t c = 0; c < k; ++c) out[v * k + c] /= sum;
    }
    return {ProbabilityMap(p.dims(), k, std::move(out)), fallback};
}

inline ProbabilityMap sharpen(const ProbabilityMap& p, SharpenConfig cfg = {}) {
    return sharpen_checked(p, cfg).map;
}

/// 1 - mean over classes of the smoothed soft Dice between `pred` and one-hot `truth`.
inline double dice_loss(const ProbabilityMap& pred, const LabelVolume& truth) {
    require(pred.dims() == truth.dims(), Errc::InvalidArgument, "dice_loss: shapes differ");
    require(truth.max_label() < pred.classes(), Errc::InvalidArgument, "dice_loss: label exceeds class count");
    const std::size_t k = pred.classes();
    std::vector<double> inter(k, 0.0), psum(k, 0.0), tsum(k, 0.0);
    for (std::size_t v = 0; v < pred.voxels(); ++v) {
        const auto pv = pred.voxel(v);
        const std::size_t label = truth.data()[v];
        for (std::size_t c = 0; c < k; ++c) psum[c] += pv[c];
        inter[label] += pv[label];
        tsum[label] += 1.0;
    }
    double score = 0.0;
    for (std::size_t c = 0; c < k; ++c)
        score += (2.0 * inter[c] + kDiceSmoothing) / (psum[c] + tsum[c] + kDiceSmoothing);
    return 1.0 - score / static_cast<double>(k);
}

inline double mse_consistency(const ProbabilityMap& pseudo, const ProbabilityMap& prob) {
    require(pseudo.same_shape(prob), Errc::InvalidArgument, "mse_consistency: shapes differ");
    const auto a = pseudo.data();
    const auto b = prob.data();
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

/// Main decoder plus the two complementary auxiliary decoders.
struct DecoderOutputs {
    std::array<ProbabilityMap, 3> maps;

    void validate() const {
        require(maps[0].same_shape(maps[1]) && maps[0].same_shape(maps[2]), Errc::InvalidArgument,
                "decoder outputs must share shape");
    }
};

struct ConsistencyBreakdown {
    // pair[i][j]: MSE between sharpen(maps[i]) and maps[j]; diagonal unused.
    std::array<std::array<double, 3>, 3> pair{};
    double loss = 0.0;
    std::size_t fallback_voxels = 0;
};

inline ConsistencyBreakdown cc_unsupervised_breakdown(const DecoderOutputs& outs, SharpenConfig cfg = {}) {
    outs.validate();
    ConsistencyBreakdown b;
    std::array<double, 6> terms{};
    std::size_t t = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto pseudo = sharpen_checked(outs.maps[i], cfg);
        b.fallback_voxels += pseudo.fallback_voxels;
        for (std::size_t j = 0; j < 3; ++j) {
            if (i == j) continue;
            b.pair[i][j] = mse_consistency(pseudo.map, outs.maps[j]);
            terms[t++] = b.pair[i][j];
        }
    }
    // Summed in sorted order so reordering the decoders cannot change the bits.
    std::sort(terms.begin(), terms.end());
    double total = 0.0;
    for (double v : terms) total += v;
    b.loss = total / 6.0;
    return b;
}

/// Mean over the six ordered (pseudo-label, probability map) decoder pairs.
inline double cc_unsupervised_loss(const DecoderOutputs& outs, SharpenConfig cfg = {}) {
    return cc_unsupervised_breakdown(outs, cfg).loss;
}

}  // namespace cardio::ssl
