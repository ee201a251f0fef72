#pragma once

// Batch commands behind the CLI. Every command reads its inputs, writes its
// artifacts under PipelineConfig::output_dir and returns the JSON report it
// wrote. Case-level work runs on `workers` threads; results are merged in
// case-id order.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cardio/agreement.hpp"
#include "cardio/csv.hpp"
#include "cardio/error.hpp"
#include "cardio/features.hpp"
#include "cardio/ingest.hpp"
#include "cardio/learn/dual_layer.hpp"
#include "cardio/nifti.hpp"
#include "cardio/parallel.hpp"
#include "cardio/phantom.hpp"
#include "cardio/segmetrics.hpp"
#include "cardio/ssl_math.hpp"
#include "json.hpp"

namespace cardio::pipeline {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Acquisition ranges outside which `validate` warns.
inline constexpr double kInPlaneSpacingMin = 1.37;
inline constexpr double kInPlaneSpacingMax = 1.68;
inline constexpr double kSliceSpacingMin = 5.0;
inline constexpr double kSliceSpacingMax = 10.0;

// File names inside the output directory.
inline constexpr const char* kValidateReport = "validate.json";
inline constexpr const char* kFeaturesCsv = "features.csv";
inline constexpr const char* kTruthFeaturesCsv = "features_truth.csv";
inline constexpr const char* kSegscoreCsv = "segscore.csv";
inline constexpr const char* kSegscoreSummaryCsv = "segscore_summary.csv";
inline constexpr const char* kAgreementCsv = "agreement.csv";
inline constexpr const char* kModelFile = "model.json";
inline constexpr const char* kSplitCsv = "split.csv";
inline constexpr const char* kPredictionsCsv = "predictions.csv";
inline constexpr const char* kReportJson = "report.json";
inline constexpr const char* kReportText = "report.txt";

struct PipelineConfig {
    std::string data_root;
    std::string output_dir = "out";
    std::uint64_t seed = 42;
    std::size_t workers = 1;
    FeatureConfig features;
    DistanceUnit seg_unit = DistanceUnit::Voxel;
    std::array<double, 3> split{0.7, 0.1, 0.2};
    learn::DualConfig learner;
    learn::SearchGrid grid;
    double temperature = 0.1;
};

// ---------------------------------------------------------------------------
// Config file (JSON). Unknown keys are rejected so typos surface.

namespace detail {

inline const char* unit_name(DistanceUnit u) { return u == DistanceUnit::Voxel ? "voxel" : "mm"; }

inline DistanceUnit unit_from(const std::string& s) {
    if (s == "voxel") return DistanceUnit::Voxel;
    if (s == "mm") return DistanceUnit::Millimetre;
    fail(Errc::Config, "distance unit must be 'voxel' or 'mm', got '" + s + "'");
}

inline CardiacPhase phase_from(const std::string& s) {
    if (s == "ED") return CardiacPhase::ED;
    if (s == "ES") return CardiacPhase::ES;
    fail(Errc::Config, "phase must be 'ED' or 'ES', got '" + s + "'");
}

inline void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    require(j.is_object(), Errc::Config, where + " must be an object");
    for (const auto& [k, v] : j.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; });
        require(known, Errc::Config, "unknown config key '" + where + "." + k + "'");
    }
}

template <typename T>
void read_key(const Json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const nlohmann::json::exception&) {
        fail(Errc::Config, "config key '" + where + "." + key + "' has the wrong type");
    }
}

}  // namespace detail

/// Effective configuration. The output directory is omitted so reports do not
/// depend on where they are written.
inline Json to_json(const PipelineConfig& c) {
    Json j;
    j["data_root"] = c.data_root;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["features"] = {{"mass_phase", to_string(c.features.mass_phase)},
                     {"ratio_phase", to_string(c.features.ratio_phase)},
                     {"mwt_phases", c.features.mwt_phases == MwtPhases::Both ? "both" : "es"},
                     {"mwt_unit", detail::unit_name(c.features.mwt_unit)}};
    j["segscore"] = {{"unit", detail::unit_name(c.seg_unit)}};
    j["split"] = {{"train", c.split[0]}, {"val", c.split[1]}, {"test", c.split[2]}};
    const auto& l = c.learner;
    j["rf"] = {{"trees", l.rf.trees}, {"max_depth", l.rf.max_depth}, {"min_leaf", l.rf.min_leaf}, {"mtry", l.rf.mtry}};
    j["svm"] = {{"kernel", learn::to_string(l.svm.kernel)},
                {"c", l.svm.c},
                {"gamma", l.svm.gamma},
                {"tolerance", l.svm.tolerance},
                {"max_iterations", l.svm.max_iterations}};
    j["mlp"] = {{"hidden", l.mlp.hidden},
                {"learning_rate", l.mlp.learning_rate},
                {"epochs", l.mlp.epochs},
                {"batch_size", l.mlp.batch_size}};
    j["voting_weights"] = l.voting_weights;
    j["layer2_features"] = l.layer2_features;
    j["grid"] = {{"rf_trees", c.grid.rf_trees},
                 {"svm_c", c.grid.svm_c},
                 {"svm_gamma", c.grid.svm_gamma},
                 {"mlp_hidden", c.grid.mlp_hidden},
                 {"mlp_learning_rate", c.grid.mlp_learning_rate}};
    j["ssl"] = {{"temperature", c.temperature}};
    return j;
}

/// Overlays `j` on `base`; keys absent from `j` keep their base values.
inline PipelineConfig config_from_json(const Json& j, PipelineConfig c = {}) {
    using detail::read_key;
    detail::check_keys(j,
                       {"data_root", "output_dir", "seed", "workers", "features", "segscore", "split", "rf", "svm", "mlp",
                        "voting_weights", "layer2_features", "grid", "ssl"},
                       "config");
    read_key(j, "data_root", c.data_root, "config");
    read_key(j, "output_dir", c.output_dir, "config");
    read_key(j, "seed", c.seed, "config");
    read_key(j, "workers", c.workers, "config");
    if (j.contains("features")) {
        const auto& f = j["features"];
        detail::check_keys(f, {"mass_phase", "ratio_phase", "mwt_phases", "mwt_unit"}, "features");
        std::string mass = to_string(c.features.mass_phase), ratio = to_string(c.features.ratio_phase);
        std::string mwt = c.features.mwt_phases == MwtPhases::Both ? "both" : "es";
        std::string unit = detail::unit_name(c.features.mwt_unit);
        read_key(f, "mass_phase", mass, "features");
        read_key(f, "ratio_phase", ratio, "features");
        read_key(f, "mwt_phases", mwt, "features");
        read_key(f, "mwt_unit", unit, "features");
        c.features.mass_phase = detail::phase_from(mass);
        c.features.ratio_phase = detail::phase_from(ratio);
        require(mwt == "both" || mwt == "es", Errc::Config, "features.mwt_phases must be 'both' or 'es'");
        c.features.mwt_phases = mwt == "both" ? MwtPhases::Both : MwtPhases::EsOnly;
        c.features.mwt_unit = detail::unit_from(unit);
    }
    if (j.contains("segscore")) {
        detail::check_keys(j["segscore"], {"unit"}, "segscore");
        std::string unit = detail::unit_name(c.seg_unit);
        read_key(j["segscore"], "unit", unit, "segscore");
        c.seg_unit = detail::unit_from(unit);
    }
    if (j.contains("split")) {
        detail::check_keys(j["split"], {"train", "val", "test"}, "split");
        read_key(j["split"], "train", c.split[0], "split");
        read_key(j["split"], "val", c.split[1], "split");
        read_key(j["split"], "test", c.split[2], "split");
    }
    auto& l = c.learner;
    if (j.contains("rf")) {
        detail::check_keys(j["rf"], {"trees", "max_depth", "min_leaf", "mtry"}, "rf");
        read_key(j["rf"], "trees", l.rf.trees, "rf");
        read_key(j["rf"], "max_depth", l.rf.max_depth, "rf");
        read_key(j["rf"], "min_leaf", l.rf.min_leaf, "rf");
        read_key(j["rf"], "mtry", l.rf.mtry, "rf");
    }
    if (j.contains("svm")) {
        detail::check_keys(j["svm"], {"kernel", "c", "gamma", "tolerance", "max_iterations"}, "svm");
        std::string kernel = learn::to_string(l.svm.kernel);
        read_key(j["svm"], "kernel", kernel, "svm");
        require(kernel == "rbf" || kernel == "linear", Errc::Config, "svm.kernel must be 'rbf' or 'linear'");
        l.svm.kernel = learn::kernel_from_string(kernel);
        read_key(j["svm"], "c", l.svm.c, "svm");
        read_key(j["svm"], "gamma", l.svm.gamma, "svm");
        read_key(j["svm"], "tolerance", l.svm.tolerance, "svm");
        read_key(j["svm"], "max_iterations", l.svm.max_iterations, "svm");
    }
    if (j.contains("mlp")) {
        detail::check_keys(j["mlp"], {"hidden", "learning_rate", "epochs", "batch_size"}, "mlp");
        read_key(j["mlp"], "hidden", l.mlp.hidden, "mlp");
        read_key(j["mlp"], "learning_rate", l.mlp.learning_rate, "mlp");
        read_key(j["mlp"], "epochs", l.mlp.epochs, "mlp");
        read_key(j["mlp"], "batch_size", l.mlp.batch_size, "mlp");
    }
    read_key(j, "voting_weights", l.voting_weights, "config");
    read_key(j, "layer2_features", l.layer2_features, "config");
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        detail::check_keys(g, {"rf_trees", "svm_c", "svm_gamma", "mlp_hidden", "mlp_learning_rate"}, "grid");
        read_key(g, "rf_trees", c.grid.rf_trees, "grid");
        read_key(g, "svm_c", c.grid.svm_c, "grid");
        read_key(g, "svm_gamma", c.grid.svm_gamma, "grid");
        read_key(g, "mlp_hidden", c.grid.mlp_hidden, "grid");
        read_key(g, "mlp_learning_rate", c.grid.mlp_learning_rate, "grid");
    }
    if (j.contains("ssl")) {
        detail::check_keys(j["ssl"], {"temperature"}, "ssl");
        read_key(j["ssl"], "temperature", c.temperature, "ssl");
    }
    return c;
}

inline void validate_config(const PipelineConfig& c) {
    for (double r : c.split) require(r > 0.0 && std::isfinite(r), Errc::Config, "split ratios must be positive");
    require(std::abs(c.split[0] + c.split[1] + c.split[2] - 1.0) < 1e-9, Errc::Config, "split ratios must sum to 1");
    require(c.workers >= 1, Errc::Config, "workers must be at least 1");
    require(!c.output_dir.empty(), Errc::Config, "output directory must be set");
    require(c.temperature > 0.0, Errc::Config, "ssl.temperature must be positive");
    require(c.learner.voting_weights.size() == 2 && c.learner.voting_weights[0] >= 0.0 &&
                c.learner.voting_weights[1] >= 0.0 && c.learner.voting_weights[0] + c.learner.voting_weights[1] > 0.0,
            Errc::Config, "voting_weights must be two non-negative numbers, not both zero");
}

inline PipelineConfig load_config(const fs::path& path, PipelineConfig base = {}) {
    require(fs::exists(path), Errc::Config, "config file " + path.string() + " not found");
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::Config, "config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j, std::move(base));
}

// ---------------------------------------------------------------------------
// File helpers

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), Errc::Io, "cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    require(static_cast<bool>(out), Errc::Io, "write failed for " + path.string());
}

inline void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

/// Reads an upstream artifact, naming the command that produces it when missing.
inline std::string read_artifact(const fs::path& path, const std::string& producer) {
    require(fs::exists(path), Errc::NotFound,
            "missing input " + path.string() + (producer.empty() ? "" : " (run `" + producer + "` first)"));
    return read_text_file(path);
}

inline fs::path output_path(const PipelineConfig& c, const std::string& name) { return fs::path(c.output_dir) / name; }

/// Case directories under the data root, sorted by name.
inline std::vector<fs::path> list_cases(const PipelineConfig& c) {
    const fs::path root(c.data_root);
    require(!c.data_root.empty(), Errc::Config, "data root is not set");
    std::error_code ec;
    require(fs::is_directory(root, ec), Errc::Io, "data root " + root.string() + " is not a readable directory");
    std::vector<fs::path> out;
    for (fs::directory_iterator it(root, ec), end; !ec && it != end; it.increment(ec))
        if (it->is_directory()) out.push_back(it->path());
    require(!ec, Errc::Io, "cannot list " + root.string() + ": " + ec.message());
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// validate

inline Json cmd_validate(const PipelineConfig& c) {
    const auto dirs = list_cases(c);
    std::vector<Json> entries(dirs.size());
    parallel_for(dirs.size(), c.workers, [&](std::size_t i) {
        Json e;
        e["case_id"] = dirs[i].filename().string();
        std::vector<std::string> warnings;
        try {
            const auto rec = load_case(dirs[i]);
            e["status"] = "ok";
            e["group"] = rec.metadata.group ? Json(std::string(to_string(*rec.metadata.group))) : Json(nullptr);
            e["ed_frame"] = rec.metadata.ed_frame;
            e["es_frame"] = rec.metadata.es_frame;
            const auto& d = rec.ed.dims();
            const auto& s = rec.ed.spacing();
            e["dims"] = {d.nx, d.ny, d.nz};
            e["spacing"] = {s.dx, s.dy, s.dz};
            e["has_truth"] = rec.ed_truth.has_value() && rec.es_truth.has_value();
            auto outside = [](double v, double lo, double hi) { return v < lo || v > hi; };
            if (outside(s.dx, kInPlaneSpacingMin, kInPlaneSpacingMax) || outside(s.dy, kInPlaneSpacingMin, kInPlaneSpacingMax))
                warnings.push_back("in-plane spacing " + csv::format(s.dx) + "x" + csv::format(s.dy) +
                                   " mm outside the expected 1.37-1.68 mm range");
            if (outside(s.dz, kSliceSpacingMin, kSliceSpacingMax))
                warnings.push_back("slice spacing " + csv::format(s.dz) + " mm outside the expected 5-10 mm range");
        } catch (const Error& err) {
            e["status"] = "error";
            e["error"] = std::string(to_string(err.code()));
            e["message"] = err.what();
        }
        e["warnings"] = warnings;
        entries[i] = std::move(e);
    });
    Json r;
    r["command"] = "validate";
    r["config"] = to_json(c);
    std::size_t ok = 0, warned = 0;
    for (const auto& e : entries) {
        ok += e["status"] == "ok";
        warned += !e["warnings"].empty();
    }
    r["cases"] = entries.size();
    r["ok"] = ok;
    r["errors"] = entries.size() - ok;
    r["with_warnings"] = warned;
    r["case_reports"] = entries;
    write_json(output_path(c, kValidateReport), r);
    return r;
}

// ---------------------------------------------------------------------------
// features

enum class VolumeSource { Prediction, Truth };

inline Json cmd_features(const PipelineConfig& c, VolumeSource src = VolumeSource::Prediction) {
    const bool truth = src == VolumeSource::Truth;
    const auto dirs = list_cases(c);
    struct Slot {
        std::optional<FeatureRow> row;
        std::string quarantine;
        std::vector<std::string> qc;
    };
    std::vector<Slot> slots(dirs.size());
    parallel_for(dirs.size(), c.workers, [&](std::size_t i) {
        auto& s = slots[i];
        try {
            auto rec = load_case(dirs[i]);
            if (truth) {
                if (!rec.ed_truth || !rec.es_truth) {
                    s.quarantine = "no-truth: ground-truth volumes missing";
                    return;
                }
                rec.ed = *rec.ed_truth;
                rec.es = *rec.es_truth;
            }
            auto ex = extract_features(rec, c.features);
            s.row = std::move(ex.row);
            s.quarantine = std::move(ex.quarantine_reason);
            s.qc = std::move(ex.qc);
        } catch (const Error& err) {
            s.quarantine = "load-failed: " + std::string(err.what());
        }
    });

    FeatureTable table;
    table.columns = feature_schema(c.features);
    std::string quarantine = "case_id,reason\n";
    Json per_case = Json::array();
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        const auto id = dirs[i].filename().string();
        if (slots[i].row) table.rows.push_back(*slots[i].row);
        else quarantine += csv::join({id, slots[i].quarantine}) + "\n";
        Json e;
        e["case_id"] = id;
        e["status"] = slots[i].row ? "ok" : "quarantined";
        if (!slots[i].row) e["reason"] = slots[i].quarantine;
        e["qc"] = slots[i].qc;
        per_case.push_back(std::move(e));
    }
    const std::string csv_name = truth ? kTruthFeaturesCsv : kFeaturesCsv;
    const std::string stem = truth ? "features_truth" : "features";
    write_text(output_path(c, csv_name), write_feature_csv(table));
    write_text(output_path(c, stem + "_quarantine.csv"), quarantine);

    Json r;
    r["command"] = "features";
    r["source"] = truth ? "truth" : "prediction";
    r["config"] = to_json(c);
    r["schema_hash"] = table.schema_hash();
    r["columns"] = table.columns;
    r["cases"] = dirs.size();
    r["extracted"] = table.rows.size();
    r["quarantined"] = dirs.size() - table.rows.size();
    r["case_reports"] = per_case;
    write_json(output_path(c, stem + ".json"), r);
    return r;
}

// ---------------------------------------------------------------------------
// segscore

inline Json cmd_segscore(const PipelineConfig& c) {
    const auto dirs = list_cases(c);
    struct Slot {
        std::optional<std::array<SegScore, 2>> scores;
        std::string skipped;
    };
    std::vector<Slot> slots(dirs.size());
    parallel_for(dirs.size(), c.workers, [&](std::size_t i) {
        try {
            const auto rec = load_case(dirs[i]);
            if (!rec.ed_truth || !rec.es_truth) {
                slots[i].skipped = "no ground truth";
                return;
            }
            slots[i].scores = std::array<SegScore, 2>{score_case(*rec.ed_truth, rec.ed, c.seg_unit),
                                                      score_case(*rec.es_truth, rec.es, c.seg_unit)};
        } catch (const Error& err) {
            slots[i].skipped = err.what();
        }
    });

    std::string rows = "case_id,phase,class,dice,hd95,asd,flagged\n";
    // Per phase and class: sums over cases with defined distances.
    struct Acc {
        double dice = 0, hd = 0, asd = 0;
        std::size_t n = 0, n_dist = 0;
    };
    std::map<std::pair<std::string, std::string>, Acc> acc;
    Json per_case = Json::array();
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        const auto id = dirs[i].filename().string();
        Json e;
        e["case_id"] = id;
        if (!slots[i].scores) {
            e["status"] = "skipped";
            e["reason"] = slots[i].skipped;
            per_case.push_back(std::move(e));
            continue;
        }
        e["status"] = "ok";
        for (int p = 0; p < 2; ++p) {
            const auto& s = (*slots[i].scores)[p];
            const std::string phase = p == 0 ? "ED" : "ES";
            Json ph;
            ph["mean_dice"] = s.mean_dice;
            ph["mean_hd95"] = s.mean_hd95 ? Json(*s.mean_hd95) : Json(nullptr);
            ph["mean_asd"] = s.mean_asd ? Json(*s.mean_asd) : Json(nullptr);
            ph["qc"] = s.qc;
            e[phase] = ph;
            for (const auto& cs : s.classes) {
                const std::string cls = to_string(cs.tissue);
                rows += csv::join({id, phase, cls, csv::format(cs.dice), csv::format(cs.hd95), csv::format(cs.asd),
                                   cs.flagged ? "1" : "0"}) +
                        "\n";
                auto& a = acc[{phase, cls}];
                a.dice += cs.dice;
                ++a.n;
                if (cs.hd95) {
                    a.hd += *cs.hd95;
                    a.asd += *cs.asd;
                    ++a.n_dist;
                }
            }
        }
        per_case.push_back(std::move(e));
    }
    std::string summary = "phase,class,cases,mean_dice,mean_hd95,mean_asd\n";
    Json agg = Json::array();
    for (const char* phase : {"ED", "ES"})
        for (auto tissue : kForegroundClasses) {
            const std::string cls = to_string(tissue);
            const auto it = acc.find({phase, cls});
            if (it == acc.end()) continue;
            const auto& a = it->second;
            const double md = a.dice / static_cast<double>(a.n);
            std::optional<double> mh, ma;
            if (a.n_dist > 0) {
                mh = a.hd / static_cast<double>(a.n_dist);
                ma = a.asd / static_cast<double>(a.n_dist);
            }
            summary += csv::join({phase, cls, std::to_string(a.n), csv::format(md), csv::format(mh), csv::format(ma)}) + "\n";
            agg.push_back({{"phase", phase},
                           {"class", cls},
                           {"cases", a.n},
                           {"mean_dice", md},
                           {"mean_hd95", mh ? Json(*mh) : Json(nullptr)},
                           {"mean_asd", ma ? Json(*ma) : Json(nullptr)}});
        }
    write_text(output_path(c, kSegscoreCsv), rows);
    write_text(output_path(c, kSegscoreSummaryCsv), summary);

    Json r;
    r["command"] = "segscore";
    r["config"] = to_json(c);
    r["unit"] = detail::unit_name(c.seg_unit);
    r["aggregate"] = agg;
    r["case_reports"] = per_case;
    write_json(output_path(c, "segscore.json"), r);
    return r;
}

// ---------------------------------------------------------------------------
// ssl-eval

inline Json cmd_ssl_eval(const PipelineConfig& c, const std::array<fs::path, 3>& maps) {
    ssl::DecoderOutputs outs;
    for (std::size_t k = 0; k < 3; ++k) {
        require(fs::exists(maps[k]), Errc::NotFound, "probability map " + maps[k].string() + " not found");
        outs.maps[k] = nifti::read_probability_map(nifti::read_file(maps[k]));
    }
    const auto b = ssl::cc_unsupervised_breakdown(outs, {c.temperature});
    Json r;
    r["command"] = "ssl-eval";
    r["config"] = to_json(c);
    r["temperature"] = c.temperature;
    Json pairs = Json::array();
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            if (i != j) pairs.push_back({{"pseudo", i}, {"prob", j}, {"mse", b.pair[i][j]}});
    r["pairs"] = pairs;
    r["loss"] = b.loss;
    r["fallback_voxels"] = b.fallback_voxels;
    write_json(output_path(c, "ssl_eval.json"), r);
    return r;
}

// ---------------------------------------------------------------------------
// agreement

/// Per-column Bland-Altman statistics over the cases present in both tables.
/// Plot data (case_id, mean, difference) goes to agreement_plot/<column>.csv.
inline Json cmd_agreement(const PipelineConfig& c, const fs::path& auto_csv, const fs::path& ref_csv, bool plot = true) {
    const auto a = read_feature_csv(read_artifact(auto_csv, "features"));
    const auto ref = read_feature_csv(read_artifact(ref_csv, "features --source truth"));
    std::map<std::string, std::size_t> ref_rows;
    for (std::size_t i = 0; i < ref.rows.size(); ++i) ref_rows[ref.rows[i].case_id] = i;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < a.rows.size(); ++i)
        if (auto it = ref_rows.find(a.rows[i].case_id); it != ref_rows.end()) pairs.emplace_back(i, it->second);
    std::sort(pairs.begin(), pairs.end(),
              [&](const auto& x, const auto& y) { return a.rows[x.first].case_id < a.rows[y.first].case_id; });
    require(pairs.size() >= 2, Errc::InvalidArgument, "agreement needs at least 2 cases present in both tables");

    std::string out = "index,n,bias,sd_diff,loa_low,loa_high,pearson_r,slope,intercept,within_loa\n";
    Json rows = Json::array();
    for (const auto& col : a.columns) {
        if (std::find(ref.columns.begin(), ref.columns.end(), col) == ref.columns.end()) continue;
        const auto ca = a.column(col), cr = ref.column(col);
        std::vector<double> xa, xr;
        for (const auto& [i, k] : pairs) {
            xa.push_back(a.rows[i].values[ca]);
            xr.push_back(ref.rows[k].values[cr]);
        }
        const auto res = bland_altman(xa, xr);
        const double within = percent_within_loa(xa, xr);
        out += csv::join({col, std::to_string(res.n), csv::format(res.bias), csv::format(res.sd_diff),
                          csv::format(res.loa_low), csv::format(res.loa_high), csv::format(res.pearson_r),
                          csv::format(res.slope), csv::format(res.intercept), csv::format(within)}) +
               "\n";
        auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
        rows.push_back({{"index", col},
                        {"n", res.n},
                        {"bias", res.bias},
                        {"sd_diff", res.sd_diff},
                        {"loa_low", res.loa_low},
                        {"loa_high", res.loa_high},
                        {"pearson_r", opt(res.pearson_r)},
                        {"slope", opt(res.slope)},
                        {"intercept", opt(res.intercept)},
                        {"within_loa", within}});
        if (plot) {
            std::string p = "case_id,mean,difference\n";
            const auto pts = bland_altman_points(xa, xr);
            for (std::size_t k = 0; k < pts.size(); ++k)
                p += csv::join({a.rows[pairs[k].first].case_id, csv::format(pts[k].mean), csv::format(pts[k].difference)}) +
                     "\n";
            write_text(output_path(c, "agreement_plot") / (col + ".csv"), p);
        }
    }
    write_text(output_path(c, kAgreementCsv), out);
    Json r;
    r["command"] = "agreement";
    r["config"] = to_json(c);
    r["auto"] = auto_csv.filename().string();
    r["reference"] = ref_csv.filename().string();
    r["paired_cases"] = pairs.size();
    r["indices"] = rows;
    write_json(output_path(c, "agreement.json"), r);
    return r;
}

// ---------------------------------------------------------------------------
// train / predict / report

namespace detail {

inline std::vector<DiseaseClass> labels_of(const FeatureTable& t, const std::string& who) {
    std::vector<DiseaseClass> out;
    for (const auto& r : t.rows) {
        require(r.group.has_value(), Errc::InvalidArgument, who + ": case " + r.case_id + " has no group label");
        out.push_back(*r.group);
    }
    return out;
}

inline Json eval_json(const std::vector<learn::DualPrediction>& preds, const FeatureTable& t) {
    std::vector<DiseaseClass> pred, layer1;
    for (const auto& p : preds) {
        pred.push_back(p.predicted);
        layer1.push_back(p.layer1);
    }
    const auto truth = labels_of(t, "evaluation");
    Json j = learn::to_json(learn::evaluate(pred, truth));
    j["layer1_accuracy"] = learn::evaluate(layer1, truth).accuracy;
    return j;
}

inline Json to_json(const learn::DualConfig& d) {
    PipelineConfig c;
    c.learner = d;
    const auto full = pipeline::to_json(c);
    return {{"rf", full["rf"]}, {"svm", full["svm"]}, {"mlp", full["mlp"]}};
}

}  // namespace detail

/// Stratified split of the labelled feature table, optional grid search on the
/// validation split, then a final fit on the training split.
inline Json cmd_train(const PipelineConfig& c, const fs::path& features_csv) {
    const auto table = read_feature_csv(read_artifact(features_csv, "features"));
    const auto labels = detail::labels_of(table, "train");
    std::vector<std::optional<DiseaseClass>> groups(labels.begin(), labels.end());
    const auto split = split_cases(groups, c.split, c.seed);
    const auto train = select_rows(table, split.train);
    const auto val = select_rows(table, split.val);

    std::string split_csv = "case_id,split\n";
    {
        std::vector<std::pair<std::string, std::string>> rows;
        for (auto i : split.train) rows.emplace_back(table.rows[i].case_id, "train");
        for (auto i : split.val) rows.emplace_back(table.rows[i].case_id, "val");
        for (auto i : split.test) rows.emplace_back(table.rows[i].case_id, "test");
        std::sort(rows.begin(), rows.end());
        for (const auto& [id, s] : rows) split_csv += csv::join({id, s}) + "\n";
    }
    write_text(output_path(c, kSplitCsv), split_csv);

    Json r;
    r["command"] = "train";
    r["config"] = to_json(c);
    r["schema_hash"] = table.schema_hash();
    r["split"] = {{"train", split.train.size()}, {"val", split.val.size()}, {"test", split.test.size()}};
    r["split_warnings"] = split.warnings;

    learn::DualConfig chosen = c.learner;
    const auto& g = c.grid;
    const bool search = !(g.rf_trees.empty() && g.svm_c.empty() && g.svm_gamma.empty() && g.mlp_hidden.empty() &&
                          g.mlp_learning_rate.empty());
    if (search) {
        require(!val.rows.empty(), Errc::InvalidArgument, "grid search needs a non-empty validation split");
        const auto gs = learn::grid_search(train, val, c.learner, g, c.seed, c.workers);
        chosen = gs.best;
        Json points = Json::array();
        for (const auto& p : gs.evaluated) {
            auto pj = detail::to_json(p.config);
            pj["val_accuracy"] = p.val_accuracy;
            points.push_back(std::move(pj));
        }
        r["grid_search"] = {{"evaluated", points}, {"best_val_accuracy", gs.best_accuracy}, {"best", detail::to_json(gs.best)}};
    }
    const auto model = learn::train_dual(train, chosen, c.seed, c.workers);
    write_text(output_path(c, kModelFile), learn::save_model(model));
    r["model"] = kModelFile;
    r["layer2_features"] = model.layer2_schema;
    r["dropped_columns"] = model.standardizer.dropped;
    r["train_metrics"] = detail::eval_json(learn::predict_dual(model, train), train);
    r["val_metrics"] = val.rows.empty() ? Json(nullptr) : detail::eval_json(learn::predict_dual(model, val), val);
    write_json(output_path(c, "train.json"), r);
    return r;
}

/// Predicts every row of `features_csv`, or only the rows `split_csv` assigns to `split_name`.
inline Json cmd_predict(const PipelineConfig& c, const fs::path& features_csv, const fs::path& model_path,
                        const std::optional<fs::path>& split_csv = std::nullopt, const std::string& split_name = "test") {
    const auto model = learn::load_model(read_artifact(model_path, "train"));
    auto table = read_feature_csv(read_artifact(features_csv, "features"));
    if (split_csv) {
        const auto rows = csv::parse(read_artifact(*split_csv, "train"));
        require(!rows.empty() && rows[0] == std::vector<std::string>{"case_id", "split"}, Errc::Schema,
                "split file must start with case_id,split");
        std::set<std::string> keep;
        for (std::size_t i = 1; i < rows.size(); ++i)
            if (rows[i].size() == 2 && rows[i][1] == split_name) keep.insert(rows[i][0]);
        std::erase_if(table.rows, [&](const FeatureRow& r) { return !keep.count(r.case_id); });
    }
    require(!table.rows.empty(), Errc::InvalidArgument, "no cases to predict");
    const auto preds = learn::predict_dual(model, table);
    write_text(output_path(c, kPredictionsCsv), learn::write_predictions_csv(preds));
    Json r;
    r["command"] = "predict";
    r["config"] = to_json(c);
    r["model"] = model_path.filename().string();
    r["features"] = features_csv.filename().string();
    r["split"] = split_csv ? Json(split_name) : Json(nullptr);
    r["predicted"] = preds.size();
    r["layer2_invoked"] = std::count_if(preds.begin(), preds.end(), [](const auto& p) { return p.layer2_proba.has_value(); });
    write_json(output_path(c, "predict.json"), r);
    return r;
}

/// Confusion matrix and accuracy of `predictions_csv` against the group labels in
/// `features_csv`, plus summaries of any other reports already in the output dir.
inline Json cmd_report(const PipelineConfig& c, const fs::path& predictions_csv, const fs::path& features_csv) {
    const auto preds = learn::read_predictions_csv(read_artifact(predictions_csv, "predict"));
    const auto table = read_feature_csv(read_artifact(features_csv, "features"));
    std::map<std::string, DiseaseClass> truth_of;
    for (const auto& r : table.rows)
        if (r.group) truth_of[r.case_id] = *r.group;
    std::vector<DiseaseClass> pred, truth;
    for (const auto& p : preds) {
        const auto it = truth_of.find(p.case_id);
        require(it != truth_of.end(), Errc::InvalidArgument, "report: no group label for case " + p.case_id);
        pred.push_back(p.predicted);
        truth.push_back(it->second);
    }
    const auto ev = learn::evaluate(pred, truth);

    Json r;
    r["command"] = "report";
    r["config"] = to_json(c);
    r["classification"] = learn::to_json(ev);
    auto attach = [&](const char* key, const char* file) {
        const auto p = output_path(c, file);
        if (!fs::exists(p)) return;
        auto j = Json::parse(read_text_file(p));
        j.erase("config");
        j.erase("case_reports");
        r[key] = std::move(j);
    };
    attach("validate", kValidateReport);
    attach("train", "train.json");
    attach("segscore", "segscore.json");
    if (const auto p = output_path(c, "agreement.json"); fs::exists(p)) {
        const auto j = Json::parse(read_text_file(p));
        r["agreement"] = {{"paired_cases", j["paired_cases"]}, {"indices", j["indices"]}};
    }
    write_json(output_path(c, kReportJson), r);

    std::string t = "Classification report\n\ncases: " + std::to_string(ev.n) + "\naccuracy: " + csv::format(ev.accuracy) +
                    "\n\nconfusion (rows truth, columns predicted)\n      ";
    for (auto k : kDiseaseClasses) {
        std::string name(to_string(k));
        t += name + std::string(6 - std::min<std::size_t>(5, name.size()), ' ');
    }
    t += "\n";
    for (auto k : kDiseaseClasses) {
        std::string name(to_string(k));
        t += name + std::string(6 - std::min<std::size_t>(5, name.size()), ' ');
        for (auto v : ev.confusion[index(k)]) {
            const auto s = std::to_string(v);
            t += s + std::string(6 - std::min<std::size_t>(5, s.size()), ' ');
        }
        t += "\n";
    }
    t += "\nrecall\n";
    for (auto k : kDiseaseClasses) {
        const auto& v = ev.recall[index(k)];
        t += "  " + std::string(to_string(k)) + ": " + (v ? csv::format(*v) : std::string("n/a")) + "\n";
    }
    if (r.contains("segscore")) {
        t += "\nsegmentation (" + r["segscore"]["unit"].get<std::string>() + " units)\n";
        for (const auto& a : r["segscore"]["aggregate"]) {
            t += "  " + a["phase"].get<std::string>() + " " + a["class"].get<std::string>() +
                 ": dice " + csv::format(a["mean_dice"].get<double>());
            if (!a["mean_hd95"].is_null()) t += ", hd95 " + csv::format(a["mean_hd95"].get<double>());
            if (!a["mean_asd"].is_null()) t += ", asd " + csv::format(a["mean_asd"].get<double>());
            t += "\n";
        }
    }
    if (r.contains("agreement")) {
        t += "\nagreement (auto vs reference)\n";
        for (const auto& a : r["agreement"]["indices"])
            t += "  " + a["index"].get<std::string>() + ": bias " + csv::format(a["bias"].get<double>()) + ", LoA [" +
                 csv::format(a["loa_low"].get<double>()) + ", " + csv::format(a["loa_high"].get<double>()) + "]\n";
    }
    write_text(output_path(c, kReportText), t);
    return r;
}

// ---------------------------------------------------------------------------
// phantom corpus and the full run

/// Writes `per_class` disease phantoms of each class under `<output>/` (one case dir each).
inline Json cmd_phantom(const PipelineConfig& c, std::size_t per_class, const std::string& prefix = "case") {
    require(per_class > 0, Errc::Config, "phantom: per-class count must be positive");
    const auto corpus = disease_phantom_corpus(per_class, c.seed, prefix);
    parallel_for(corpus.size(), c.workers, [&](std::size_t i) { write_case(c.output_dir, corpus[i]); });
    Json r;
    r["command"] = "phantom";
    r["seed"] = c.seed;
    r["per_class"] = per_class;
    r["cases"] = corpus.size();
    return r;
}

/// validate, features (prediction and truth), segscore, agreement, train,
/// predict on the test split and report, all under one output directory.
inline Json run_all(const PipelineConfig& c) {
    validate_config(c);
    cmd_validate(c);
    cmd_features(c, VolumeSource::Prediction);
    cmd_features(c, VolumeSource::Truth);
    cmd_segscore(c);
    cmd_agreement(c, output_path(c, kFeaturesCsv), output_path(c, kTruthFeaturesCsv));
    cmd_train(c, output_path(c, kFeaturesCsv));
    cmd_predict(c, output_path(c, kFeaturesCsv), output_path(c, kModelFile), output_path(c, kSplitCsv), "test");
    return cmd_report(c, output_path(c, kPredictionsCsv), output_path(c, kFeaturesCsv));
}

}  // namespace cardio::pipeline
