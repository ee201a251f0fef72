#pragma once

// Two-stage disease classifier. Layer 1 soft-votes a random forest and an SVM
// over all standardized features into five classes. When the vote lands on
// MINF or DCM, a small MLP trained on wall-thickness and LV-size features
// makes the final MINF/DCM call.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cardio/csv.hpp"
#include "cardio/disease.hpp"
#include "cardio/error.hpp"
#include "cardio/features.hpp"
#include "cardio/hash.hpp"
#include "cardio/learn/data.hpp"
#include "cardio/learn/mlp.hpp"
#include "cardio/learn/random_forest.hpp"
#include "cardio/learn/svm.hpp"
#include "json.hpp"

namespace cardio::learn {

inline constexpr int kModelFormatVersion = 1;

/// Weighted mean of several probability-row sets, renormalized per row.
inline ProbRows soft_vote(const std::vector<ProbRows>& sets, const std::vector<double>& weights) {
    require(!sets.empty() && sets.size() == weights.size(), Errc::InvalidArgument,
            "soft_vote: need one weight per probability set");
    double wsum = 0.0;
    for (double w : weights) {
        require(std::isfinite(w) && w >= 0.0, Errc::InvalidArgument, "soft_vote: weights must be >= 0");
        wsum += w;
    }
    require(wsum > 0.0, Errc::InvalidArgument, "soft_vote: weights sum to 0");
    const std::size_t rows = sets[0].size();
    for (const auto& s : sets) {
        require(s.size() == rows, Errc::InvalidArgument, "soft_vote: row counts differ");
        for (std::size_t i = 0; i < rows; ++i)
            require(s[i].size() == sets[0][i].size(), Errc::InvalidArgument, "soft_vote: class counts differ");
    }
    ProbRows out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        out[i].assign(sets[0][i].size(), 0.0);
        for (std::size_t s = 0; s < sets.size(); ++s)
            for (std::size_t k = 0; k < out[i].size(); ++k) out[i][k] += weights[s] * sets[s][i][k];
        double total = 0.0;
        for (double v : out[i]) total += v;
        for (double& v : out[i]) v /= total;
    }
    return out;
}

struct DualConfig {
    ForestParams rf;
    SvmParams svm;
    MlpParams mlp;
    std::array<double, 2> voting_weights{0.5, 0.5};  // forest, svm
    std::vector<std::string> layer2_features;       // empty = default subset

    bool operator==(const DualConfig&) const = default;
};

/// Wall-thickness statistics plus LV size and function, in schema order.
inline std::vector<std::string> default_layer2_features(const std::vector<std::string>& columns) {
    std::vector<std::string> out;
    for (const auto& c : columns)
        if (c.rfind("mwt_", 0) == 0 || c == "lv_vol_ed" || c == "lv_vol_es" || c == "lv_ef") out.push_back(c);
    return out;
}

struct DualLayerModel {
    int format_version = kModelFormatVersion;
    StandardizationParams standardizer;
    RandomForestModel rf;
    SvmModel svm;
    MlpModel mlp;
    std::array<double, 2> voting_weights{0.5, 0.5};
    std::vector<std::string> layer2_schema;

    [[nodiscard]] std::string schema_hash() const { return cardio::schema_hash(standardizer.input_columns); }
    [[nodiscard]] std::string layer2_schema_hash() const { return cardio::schema_hash(layer2_schema); }

    bool operator==(const DualLayerModel&) const = default;
};

namespace detail {

inline Matrix to_matrix(const FeatureTable& t, const std::vector<std::size_t>& cols) {
    Matrix m(t.rows.size(), cols.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) m(i, j) = t.rows[i].values[cols[j]];
    return m;
}

inline std::vector<std::size_t> all_columns(const FeatureTable& t) {
    std::vector<std::size_t> c(t.columns.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = i;
    return c;
}

inline std::vector<std::size_t> column_indices(const FeatureTable& t, const std::vector<std::string>& names) {
    std::vector<std::size_t> c;
    for (const auto& n : names) c.push_back(t.column(n));
    return c;
}

}  // namespace detail

inline DualLayerModel train_dual(const FeatureTable& train, const DualConfig& cfg, std::uint64_t seed,
                                 std::size_t workers = 1) {
    std::vector<int> y;
    std::array<std::size_t, kDiseaseClassCount> seen{};
    for (const auto& r : train.rows) {
        require(r.group.has_value(), Errc::InvalidArgument, "train_dual: case " + r.case_id + " has no group label");
        y.push_back(static_cast<int>(index(*r.group)));
        ++seen[index(*r.group)];
    }
    for (auto c : kDiseaseClasses)
        require(seen[index(c)] > 0, Errc::DegenerateTraining,
                "train_dual: class " + std::string(to_string(c)) + " is missing from the training data");

    DualLayerModel m;
    m.voting_weights = cfg.voting_weights;
    m.standardizer = fit_standardizer(train);
    const auto z = apply_standardizer(m.standardizer, train);
    const auto x = detail::to_matrix(z, detail::all_columns(z));

    m.rf = train_random_forest(x, y, kDiseaseClassCount, cfg.rf, derive_seed(seed, 1), workers);
    m.svm = train_svm_ovr(x, y, kDiseaseClassCount, cfg.svm, workers);

    const auto requested = cfg.layer2_features.empty() ? default_layer2_features(train.columns) : cfg.layer2_features;
    for (const auto& f : requested) {
        require(std::find(train.columns.begin(), train.columns.end(), f) != train.columns.end(), Errc::Schema,
                "layer-2 feature '" + f + "' is not in the feature table");
        // Columns constant on the training set carry no information and were dropped.
        if (std::find(z.columns.begin(), z.columns.end(), f) != z.columns.end()) m.layer2_schema.push_back(f);
    }
    require(!m.layer2_schema.empty(), Errc::DegenerateTraining, "layer-2 feature subset is empty");

    FeatureTable pair;
    pair.columns = z.columns;
    std::vector<int> y2;
    for (const auto& r : z.rows) {
        if (*r.group != DiseaseClass::MINF && *r.group != DiseaseClass::DCM) continue;
        pair.rows.push_back(r);
        y2.push_back(*r.group == DiseaseClass::MINF ? 0 : 1);
    }
    m.mlp = train_mlp(detail::to_matrix(pair, detail::column_indices(pair, m.layer2_schema)), y2, 2, cfg.mlp,
                      derive_seed(seed, 2));
    return m;
}

struct DualPrediction {
    std::string case_id;
    DiseaseClass predicted = DiseaseClass::NOR;
    DiseaseClass layer1 = DiseaseClass::NOR;
    std::vector<double> layer1_proba;                // 5 classes
    std::optional<std::array<double, 2>> layer2_proba;  // (MINF, DCM) when layer 2 ran
};

/// Layer-1 argmax, overridden by layer 2 when it is MINF or DCM.
inline DiseaseClass route_decision(DiseaseClass layer1, const std::optional<std::array<double, 2>>& layer2) {
    if ((layer1 != DiseaseClass::MINF && layer1 != DiseaseClass::DCM) || !layer2) return layer1;
    return (*layer2)[1] > (*layer2)[0] ? DiseaseClass::DCM : DiseaseClass::MINF;
}

inline std::vector<DualPrediction> predict_dual(const DualLayerModel& m, const FeatureTable& t) {
    require(t.columns == m.standardizer.input_columns, Errc::Schema,
            "feature schema " + t.schema_hash() + " does not match the model schema " + m.schema_hash());
    const auto z = apply_standardizer(m.standardizer, t);
    const auto x = detail::to_matrix(z, detail::all_columns(z));
    const auto x2 = detail::to_matrix(z, detail::column_indices(z, m.layer2_schema));
    const auto p1 = soft_vote({rf_predict_proba(m.rf, x), svm_predict_proba(m.svm, x)},
                              {m.voting_weights[0], m.voting_weights[1]});
    std::vector<DualPrediction> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        DualPrediction p;
        p.case_id = t.rows[i].case_id;
        p.layer1_proba = p1[i];
        p.layer1 = disease_from_index(argmax_row(p1[i]));
        if (p.layer1 == DiseaseClass::MINF || p.layer1 == DiseaseClass::DCM) {
            const auto q = mlp_predict_proba_row(m.mlp, x2.row(i));
            p.layer2_proba = std::array<double, 2>{q[0], q[1]};
        }
        p.predicted = route_decision(p.layer1, p.layer2_proba);
        out.push_back(std::move(p));
    }
    return out;
}

/// Layer-1 decisions only, for comparison against the full model.
inline std::vector<DiseaseClass> predict_layer1(const DualLayerModel& m, const FeatureTable& t) {
    std::vector<DiseaseClass> out;
    for (const auto& p : predict_dual(m, t)) out.push_back(p.layer1);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalReport {
    std::array<std::array<std::size_t, kDiseaseClassCount>, kDiseaseClassCount> confusion{};  // [truth][pred]
    std::size_t n = 0;
    double accuracy = 0.0;
    std::array<std::optional<double>, kDiseaseClassCount> recall;  // empty when the class has no truth cases
};

inline EvalReport evaluate(const std::vector<DiseaseClass>& pred, const std::vector<DiseaseClass>& truth) {
    require(pred.size() == truth.size(), Errc::InvalidArgument, "evaluate: prediction and truth lengths differ");
    require(!pred.empty(), Errc::InvalidArgument, "evaluate: no cases");
    EvalReport r;
    r.n = pred.size();
    for (std::size_t i = 0; i < pred.size(); ++i) ++r.confusion[index(truth[i])][index(pred[i])];
    std::size_t trace = 0;
    for (std::size_t k = 0; k < kDiseaseClassCount; ++k) {
        trace += r.confusion[k][k];
        std::size_t row = 0;
        for (auto v : r.confusion[k]) row += v;
        if (row > 0) r.recall[k] = static_cast<double>(r.confusion[k][k]) / static_cast<double>(row);
    }
    r.accuracy = static_cast<double>(trace) / static_cast<double>(r.n);
    return r;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["n"] = r.n;
    j["accuracy"] = r.accuracy;
    nlohmann::ordered_json labels = nlohmann::ordered_json::array();
    for (auto c : kDiseaseClasses) labels.push_back(std::string(to_string(c)));
    j["classes"] = labels;
    j["confusion"] = r.confusion;
    nlohmann::ordered_json rec = nlohmann::ordered_json::object();
    for (auto c : kDiseaseClasses) {
        const auto& v = r.recall[index(c)];
        rec[std::string(to_string(c))] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    }
    j["recall"] = rec;
    return j;
}

// ---------------------------------------------------------------------------
// Predictions CSV

inline std::string write_predictions_csv(const std::vector<DualPrediction>& preds) {
    std::string s = "case_id,predicted_class,p_nor,p_minf,p_dcm,p_hcm,p_arv,p2_minf,p2_dcm\n";
    for (const auto& p : preds) {
        s += p.case_id + "," + std::string(to_string(p.predicted));
        for (double v : p.layer1_proba) s += "," + csv::format(v);
        if (p.layer2_proba) s += "," + csv::format((*p.layer2_proba)[0]) + "," + csv::format((*p.layer2_proba)[1]);
        else s += ",,";
        s += "\n";
    }
    return s;
}

struct PredictionRow {
    std::string case_id;
    DiseaseClass predicted = DiseaseClass::NOR;
};

inline std::vector<PredictionRow> read_predictions_csv(std::string_view text) {
    const auto rows = csv::parse(text);
    require(!rows.empty() && rows[0].size() >= 2 && rows[0][0] == "case_id" && rows[0][1] == "predicted_class",
            Errc::Schema, "predictions CSV must start with case_id,predicted_class");
    std::vector<PredictionRow> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        require(rows[i].size() >= 2, Errc::Parse, "predictions CSV row " + std::to_string(i) + " is too short");
        out.push_back({rows[i][0], disease_from_string(rows[i][1])});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence: JSON payload plus an FNV-1a checksum of its compact dump.

inline nlohmann::ordered_json to_json(const StandardizationParams& p) {
    nlohmann::ordered_json j;
    j["input_columns"] = p.input_columns;
    j["columns"] = p.columns;
    j["mean"] = p.mean;
    j["stdev"] = p.stdev;
    j["dropped"] = p.dropped;
    return j;
}

inline StandardizationParams standardizer_from_json(const nlohmann::ordered_json& j) {
    StandardizationParams p;
    j.at("input_columns").get_to(p.input_columns);
    j.at("columns").get_to(p.columns);
    j.at("mean").get_to(p.mean);
    j.at("stdev").get_to(p.stdev);
    j.at("dropped").get_to(p.dropped);
    require(p.mean.size() == p.columns.size() && p.stdev.size() == p.columns.size(), Errc::Integrity,
            "standardizer: column count mismatch");
    return p;
}

namespace detail {

inline nlohmann::ordered_json model_payload(const DualLayerModel& m) {
    nlohmann::ordered_json j;
    j["format_version"] = m.format_version;
    j["schema_hash"] = m.schema_hash();
    j["standardizer"] = to_json(m.standardizer);
    j["rf"] = to_json(m.rf);
    j["svm"] = to_json(m.svm);
    j["mlp"] = to_json(m.mlp);
    j["voting_weights"] = m.voting_weights;
    j["layer2_schema"] = m.layer2_schema;
    j["layer2_schema_hash"] = m.layer2_schema_hash();
    return j;
}

}  // namespace detail

inline std::string save_model(const DualLayerModel& m) {
    auto j = detail::model_payload(m);
    j["checksum"] = hex64(fnv1a(j.dump()));
    return j.dump() + "\n";
}

inline DualLayerModel load_model(std::string_view text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::Integrity, std::string("model file is not valid JSON: ") + e.what());
    }
    require(j.is_object() && j.contains("format_version") && j["format_version"].is_number_integer(), Errc::Integrity,
            "model file has no format_version");
    const int version = j["format_version"].get<int>();
    if (version != kModelFormatVersion)
        fail(Errc::UnsupportedVersion, "model format version " + std::to_string(version) + " is not supported (expected " +
                                           std::to_string(kModelFormatVersion) + ")");
    require(j.contains("checksum") && j["checksum"].is_string(), Errc::Integrity, "model file has no checksum");
    const auto stored = j["checksum"].get<std::string>();
    j.erase("checksum");
    const auto actual = hex64(fnv1a(j.dump()));
    require(stored == actual, Errc::Integrity, "model checksum mismatch (stored " + stored + ", computed " + actual + ")");

    DualLayerModel m;
    try {
        m.format_version = version;
        m.standardizer = standardizer_from_json(j.at("standardizer"));
        m.rf = random_forest_from_json(j.at("rf"));
        m.svm = svm_from_json(j.at("svm"));
        m.mlp = mlp_from_json(j.at("mlp"));
        j.at("voting_weights").get_to(m.voting_weights);
        j.at("layer2_schema").get_to(m.layer2_schema);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::Integrity, std::string("model file is malformed: ") + e.what());
    }
    require(j.at("schema_hash").get<std::string>() == m.schema_hash(), Errc::Integrity, "model schema hash mismatch");
    require(j.at("layer2_schema_hash").get<std::string>() == m.layer2_schema_hash(), Errc::Integrity,
            "model layer-2 schema hash mismatch");
    require(m.rf.features == m.standardizer.columns.size() && m.svm.features == m.standardizer.columns.size() &&
                m.mlp.inputs() == m.layer2_schema.size() && m.mlp.outputs() == 2 && m.rf.classes == kDiseaseClassCount &&
                m.svm.machines.size() == kDiseaseClassCount,
            Errc::Integrity, "model components disagree on their dimensions");
    return m;
}

// ---------------------------------------------------------------------------
// Hyperparameter search on a validation split

struct SearchGrid {
    std::vector<std::size_t> rf_trees;
    std::vector<double> svm_c;
    std::vector<double> svm_gamma;
    std::vector<std::size_t> mlp_hidden;
    std::vector<double> mlp_learning_rate;
};

struct GridPoint {
    DualConfig config;
    double val_accuracy = 0.0;
};

struct GridSearchResult {
    DualConfig best;
    double best_accuracy = -1.0;
    std::vector<GridPoint> evaluated;
};

/// Exhaustive search; the first configuration reaching the best validation accuracy wins.
inline GridSearchResult grid_search(const FeatureTable& train, const FeatureTable& val, const DualConfig& base,
                                    const SearchGrid& grid, std::uint64_t seed, std::size_t workers = 1) {
    auto or_base = []<typename T>(const std::vector<T>& v, T b) { return v.empty() ? std::vector<T>{b} : v; };
    const auto trees = or_base(grid.rf_trees, base.rf.trees);
    const auto cs = or_base(grid.svm_c, base.svm.c);
    const auto gammas = or_base(grid.svm_gamma, base.svm.gamma);
    const auto hidden = or_base(grid.mlp_hidden, base.mlp.hidden.empty() ? std::size_t{16} : base.mlp.hidden.front());
    const auto lrs = or_base(grid.mlp_learning_rate, base.mlp.learning_rate);

    std::vector<DiseaseClass> truth;
    for (const auto& r : val.rows) {
        require(r.group.has_value(), Errc::InvalidArgument, "grid search: validation case " + r.case_id + " is unlabeled");
        truth.push_back(*r.group);
    }
    require(!truth.empty(), Errc::InvalidArgument, "grid search: validation split is empty");

    GridSearchResult out;
    for (auto t : trees)
        for (auto c : cs)
            for (auto g : gammas)
                for (auto h : hidden)
                    for (auto lr : lrs) {
                        DualConfig cfg = base;
                        cfg.rf.trees = t;
                        cfg.svm.c = c;
                        cfg.svm.gamma = g;
                        cfg.mlp.hidden = {h};
                        cfg.mlp.learning_rate = lr;
                        const auto model = train_dual(train, cfg, seed, workers);
                        std::vector<DiseaseClass> pred;
                        for (const auto& p : predict_dual(model, val)) pred.push_back(p.predicted);
                        const double acc = evaluate(pred, truth).accuracy;
                        out.evaluated.push_back({cfg, acc});
                        if (acc > out.best_accuracy) {
                            out.best_accuracy = acc;
                            out.best = cfg;
                        }
                    }
    return out;
}

}  // namespace cardio::learn
