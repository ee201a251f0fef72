#pragma once

// Synthetic feature tables for classifier tests.

#include <string>
#include <vector>

#include "cardio/disease.hpp"
#include "cardio/features.hpp"
#include "cardio/rng.hpp"

namespace fixture {

/// One well-separated Gaussian cluster per class over the default feature schema.
inline cardio::FeatureTable gaussian_clusters(std::size_t per_class, std::uint64_t seed, const std::string& prefix = "g") {
    using namespace cardio;
    FeatureTable t;
    t.columns = feature_schema();
    Rng rng(seed);
    const std::size_t p = t.columns.size();
    std::vector<std::vector<double>> centre(kDiseaseClassCount, std::vector<double>(p));
    Rng layout(7);
    for (auto& c : centre)
        for (auto& v : c) v = layout.uniform(-10.0, 10.0);
    std::size_t id = 0;
    for (std::size_t i = 0; i < per_class; ++i)
        for (auto k : kDiseaseClasses) {
            FeatureRow r{prefix + std::to_string(id++), k, {}};
            for (std::size_t j = 0; j < p; ++j) r.values.push_back(centre[index(k)][j] + rng.normal(0.0, 0.5));
            t.rows.push_back(std::move(r));
        }
    return t;
}

/// NOR, HCM and ARV sit in their own clusters. MINF and DCM share one cluster
/// on every column except a wall-heterogeneity / LV-volume pair, where they
/// separate only along the diagonal: each axis alone overlaps heavily.
inline cardio::FeatureTable minf_dcm_overlap(std::size_t per_class, std::uint64_t seed, const std::string& prefix = "o") {
    using namespace cardio;
    FeatureTable t;
    t.columns = feature_schema();
    const auto col = [&](const std::string& n) { return t.column(n); };
    const std::size_t p = t.columns.size();
    const std::size_t hetero = col("mwt_es_std_mean"), volume = col("lv_vol_ed");
    Rng rng(seed);
    std::vector<double> centre_other[3];
    Rng layout(11);
    for (auto& c : centre_other) {
        c.resize(p);
        for (auto& v : c) v = layout.uniform(-10.0, 10.0);
    }
    std::size_t id = 0;
    for (std::size_t i = 0; i < per_class; ++i)
        for (auto k : kDiseaseClasses) {
            FeatureRow r{prefix + std::to_string(id++), k, std::vector<double>(p)};
            if (k == DiseaseClass::MINF || k == DiseaseClass::DCM) {
                for (auto& v : r.values) v = rng.normal(0.0, 1.0);
                const double s = k == DiseaseClass::MINF ? 1.0 : -1.0;
                const double u = rng.normal(0.0, 1.0);
                r.values[hetero] = u + 0.6 * s + rng.normal(0.0, 0.15);
                r.values[volume] = -u + 0.6 * s + rng.normal(0.0, 0.15);
            } else {
                const auto& c = centre_other[k == DiseaseClass::NOR ? 0 : k == DiseaseClass::HCM ? 1 : 2];
                for (std::size_t j = 0; j < p; ++j) r.values[j] = c[j] + rng.normal(0.0, 1.0);
            }
            t.rows.push_back(std::move(r));
        }
    return t;
}

inline std::vector<cardio::DiseaseClass> labels(const cardio::FeatureTable& t) {
    std::vector<cardio::DiseaseClass> y;
    for (const auto& r : t.rows) y.push_back(*r.group);
    return y;
}

}  // namespace fixture
