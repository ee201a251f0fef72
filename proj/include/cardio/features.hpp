#pragma once

// Classification features per case: volumes, mass, volume ratios, ejection
// fractions, wall-thickness statistics and body measurements; plus the
// feature table CSV, z-score standardization and stratified splitting.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cardio/csv.hpp"
#include "cardio/disease.hpp"
#include "cardio/error.hpp"
#include "cardio/hash.hpp"
#include "cardio/indices.hpp"
#include "cardio/ingest.hpp"
#include "cardio/mwt.hpp"
#include "cardio/rng.hpp"
#include "cardio/stats.hpp"

namespace cardio {

enum class MwtPhases { Both, EsOnly };

struct FeatureConfig {
    CardiacPhase mass_phase = CardiacPhase::ED;
    CardiacPhase ratio_phase = CardiacPhase::ED;
    MwtPhases mwt_phases = MwtPhases::Both;
    DistanceUnit mwt_unit = DistanceUnit::Millimetre;
};

inline std::vector<std::string> feature_schema(const FeatureConfig& cfg = {}) {
    std::vector<std::string> s = {"lv_vol_ed", "lv_vol_es", "rv_vol_ed", "rv_vol_es"};
    if (cfg.mass_phase == CardiacPhase::ED) s.push_back("myo_vol_ed");
    s.insert(s.end(), {"myo_vol_es", "myo_mass", "ratio_lv_rv", "ratio_myo_lv", "lv_ef", "rv_ef"});
    auto add_mwt = [&](const std::string& phase) {
        for (const char* stat : {"max_mean", "std_mean", "mean_std", "std_std"}) s.push_back("mwt_" + phase + "_" + stat);
    };
    if (cfg.mwt_phases == MwtPhases::Both) add_mwt("ed");
    add_mwt("es");
    s.insert(s.end(), {"height", "weight", "bsa"});
    return s;
}

struct FeatureRow {
    std::string case_id;
    std::optional<DiseaseClass> group;
    std::vector<double> values;

    bool operator==(const FeatureRow&) const = default;
};

struct FeatureTable {
    std::vector<std::string> columns;
    std::vector<FeatureRow> rows;

    [[nodiscard]] std::string schema_hash() const { return cardio::schema_hash(columns); }
    [[nodiscard]] std::size_t column(const std::string& name) const {
        const auto it = std::find(columns.begin(), columns.end(), name);
        require(it != columns.end(), Errc::Schema, "feature table has no column '" + name + "'");
        return static_cast<std::size_t>(it - columns.begin());
    }
    [[nodiscard]] std::vector<double> column_values(const std::string& name) const {
        const auto c = column(name);
        std::vector<double> out;
        for (const auto& r : rows) out.push_back(r.values[c]);
        return out;
    }

    bool operator==(const FeatureTable&) const = default;
};

struct FeatureExtraction {
    std::optional<FeatureRow> row;  // empty when quarantined
    std::string quarantine_reason;
    std::vector<std::string> qc;  // skipped MWT slices, warnings
};

inline FeatureExtraction extract_features(const CaseRecord& c, const FeatureConfig& cfg = {}) {
    FeatureExtraction out;
    const auto& id = c.metadata.case_id;
    auto quarantine = [&](std::string reason) {
        out.quarantine_reason = std::move(reason);
        return out;
    };

    const auto ed = phase_volumes(c.ed);
    const auto es = phase_volumes(c.es);
    if (!(ed.lv > 0.0)) return quarantine("zero-denominator: LV volume at ED is 0 (LV ejection fraction)");
    if (!(ed.rv > 0.0)) return quarantine("zero-denominator: RV volume at ED is 0 (RV ejection fraction)");
    const auto idx = compute_indices(c, cfg.mass_phase);
    for (const auto& w : idx.warnings) out.qc.push_back(w);

    const auto& rp = idx.at(cfg.ratio_phase);
    if (!(rp.rv > 0.0)) return quarantine(std::string("zero-denominator: RV volume at ") + to_string(cfg.ratio_phase));
    if (!(rp.lv > 0.0)) return quarantine(std::string("zero-denominator: LV volume at ") + to_string(cfg.ratio_phase));

    auto phase_mwt = [&](CardiacPhase p) -> std::optional<PhaseMwt> {
        try {
            auto m = volume_mwt(c.volume(p), cfg.mwt_unit);
            for (const auto& s : m.skipped)
                out.qc.push_back(std::string(to_string(p)) + " slice " + std::to_string(s.z) + ": " + to_string(s.reason));
            return m;
        } catch (const Error& e) {
            if (e.code() != Errc::NoMyocardium) throw;
            return std::nullopt;
        }
    };

    FeatureRow row;
    row.case_id = id;
    row.group = c.metadata.group;
    auto& v = row.values;
    v = {ed.lv, es.lv, ed.rv, es.rv};
    if (cfg.mass_phase == CardiacPhase::ED) v.push_back(ed.myo);
    v.insert(v.end(), {es.myo, idx.myo_mass, rp.lv / rp.rv, rp.myo / rp.lv, idx.lv_ef, idx.rv_ef});

    std::vector<CardiacPhase> mwt_phases;
    if (cfg.mwt_phases == MwtPhases::Both) mwt_phases.push_back(CardiacPhase::ED);
    mwt_phases.push_back(CardiacPhase::ES);
    for (auto p : mwt_phases) {
        const auto m = phase_mwt(p);
        if (!m) return quarantine(std::string("no-myocardium: no measurable wall at ") + to_string(p));
        const auto& f = m->features;
        v.insert(v.end(), {f.max_of_means, f.stdev_of_means, f.mean_of_stdevs, f.stdev_of_stdevs});
    }
    v.insert(v.end(), {c.metadata.height_cm, c.metadata.weight_kg, idx.bsa});

    for (std::size_t i = 0; i < v.size(); ++i)
        if (!std::isfinite(v[i])) return quarantine("non-finite feature " + feature_schema(cfg)[i]);
    out.row = std::move(row);
    return out;
}

// ---------------------------------------------------------------------------
// CSV: case_id,group,<schema columns...>

inline std::string write_feature_csv(const FeatureTable& t) {
    std::string s = "case_id,group";
    for (const auto& c : t.columns) s += "," + c;
    s += "\n";
    for (const auto& r : t.rows) {
        s += r.case_id + ",";
        if (r.group) s += std::string(to_string(*r.group));
        for (double v : r.values) s += "," + csv::format(v);
        s += "\n";
    }
    return s;
}

inline FeatureTable read_feature_csv(std::string_view text) {
    const auto rows = csv::parse(text);
    require(!rows.empty(), Errc::Parse, "feature CSV is empty");
    const auto& header = rows.front();
    require(header.size() >= 2 && header[0] == "case_id" && header[1] == "group", Errc::Schema,
            "feature CSV must start with columns case_id,group");
    FeatureTable t;
    t.columns.assign(header.begin() + 2, header.end());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        require(r.size() == header.size(), Errc::Parse,
                "feature CSV row " + std::to_string(i) + " has " + std::to_string(r.size()) + " cells, expected " +
                    std::to_string(header.size()));
        FeatureRow row;
        row.case_id = r[0];
        if (!r[1].empty()) row.group = disease_from_string(r[1]);
        for (std::size_t c = 2; c < r.size(); ++c) row.values.push_back(csv::parse_double(r[c], "feature " + header[c]));
        t.rows.push_back(std::move(row));
    }
    return t;
}

// ---------------------------------------------------------------------------
// Standardization

struct StandardizationParams {
    std::vector<std::string> input_columns;  // schema the params were fit on
    std::vector<std::string> columns;        // retained (non-constant) columns
    std::vector<double> mean;
    std::vector<double> stdev;
    std::vector<std::string> dropped;

    bool operator==(const StandardizationParams&) const = default;
};

/// Fit z-score parameters; constant columns are dropped and listed in `dropped`.
inline StandardizationParams fit_standardizer(const FeatureTable& train) {
    require(train.rows.size() >= 2, Errc::InvalidArgument, "standardizer needs at least 2 training rows");
    StandardizationParams p;
    p.input_columns = train.columns;
    for (std::size_t c = 0; c < train.columns.size(); ++c) {
        std::vector<double> col;
        for (const auto& r : train.rows) col.push_back(r.values[c]);
        const double m = stats::mean(col);
        const double sd = stats::sample_stdev(col);
        if (!(sd > 1e-12 * std::max(1.0, std::abs(m)))) {
            p.dropped.push_back(train.columns[c]);
            continue;
        }
        p.columns.push_back(train.columns[c]);
        p.mean.push_back(m);
        p.stdev.push_back(sd);
    }
    return p;
}

inline FeatureTable apply_standardizer(const StandardizationParams& p, const FeatureTable& t) {
    require(t.columns == p.input_columns, Errc::Schema,
            "feature schema " + t.schema_hash() + " does not match standardizer schema " + schema_hash(p.input_columns));
    std::vector<std::size_t> src;
    for (const auto& c : p.columns) src.push_back(t.column(c));
    FeatureTable out;
    out.columns = p.columns;
    for (const auto& r : t.rows) {
        FeatureRow z{r.case_id, r.group, {}};
        for (std::size_t j = 0; j < src.size(); ++j) z.values.push_back((r.values[src[j]] - p.mean[j]) / p.stdev[j]);
        out.rows.push_back(std::move(z));
    }
    return out;
}

/// Maps standardized values back to the original scale (retained columns only).
inline FeatureTable invert_standardizer(const StandardizationParams& p, const FeatureTable& z) {
    require(z.columns == p.columns, Errc::Schema, "standardized table does not match params");
    FeatureTable out = z;
    for (auto& r : out.rows)
        for (std::size_t j = 0; j < r.values.size(); ++j) r.values[j] = r.values[j] * p.stdev[j] + p.mean[j];
    return out;
}

// ---------------------------------------------------------------------------
// Splitting

struct CaseSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
    std::vector<std::string> warnings;
};

/// Stratified (by group; unlabeled cases form their own stratum), seed-deterministic partition.
inline CaseSplit split_cases(const std::vector<std::optional<DiseaseClass>>& groups, std::array<double, 3> ratios,
                             std::uint64_t seed) {
    for (double r : ratios) require(r > 0.0 && std::isfinite(r), Errc::InvalidArgument, "split ratios must be positive");
    require(std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) < 1e-9, Errc::InvalidArgument, "split ratios must sum to 1");

    std::array<std::vector<std::size_t>, kDiseaseClassCount + 1> strata;
    for (std::size_t i = 0; i < groups.size(); ++i)
        strata[groups[i] ? index(*groups[i]) : kDiseaseClassCount].push_back(i);

    CaseSplit out;
    for (std::size_t s = 0; s < strata.size(); ++s) {
        auto members = strata[s];
        const std::size_t n = members.size();
        if (n == 0) continue;
        if (n < 3)
            out.warnings.push_back("stratum " + std::string(s < kDiseaseClassCount ? to_string(disease_from_index(s)) : "unlabeled") +
                                   " has " + std::to_string(n) + " case(s), fewer than the 3 splits");
        Rng rng(derive_seed(seed, s));
        rng.shuffle(members);

        // Largest-remainder apportionment; ties favour the earlier split.
        std::array<std::size_t, 3> count{};
        std::array<double, 3> frac{};
        std::size_t assigned = 0;
        for (int k = 0; k < 3; ++k) {
            const double q = static_cast<double>(n) * ratios[k];
            count[k] = static_cast<std::size_t>(std::floor(q + 1e-9));
            frac[k] = q - static_cast<double>(count[k]);
            assigned += count[k];
        }
        while (assigned < n) {
            int best = 0;
            for (int k = 1; k < 3; ++k)
                if (frac[k] > frac[best] + 1e-12) best = k;
            ++count[best];
            frac[best] = -1.0;
            ++assigned;
        }
        std::size_t pos = 0;
        std::vector<std::size_t>* dest[3] = {&out.train, &out.val, &out.test};
        for (int k = 0; k < 3; ++k)
            for (std::size_t j = 0; j < count[k]; ++j) dest[k]->push_back(members[pos++]);
    }
    for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
    return out;
}

inline FeatureTable select_rows(const FeatureTable& t, const std::vector<std::size_t>& idx) {
    FeatureTable out;
    out.columns = t.columns;
    for (auto i : idx) out.rows.push_back(t.rows.at(i));
    return out;
}

}  // namespace cardio
