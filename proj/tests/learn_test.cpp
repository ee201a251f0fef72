#include <gtest/gtest.h>

#include <cmath>

#include "cardio/learn/dual_layer.hpp"
#include "support/fixtures.hpp"

using namespace cardio;
using namespace cardio::learn;

namespace {

struct Labeled {
    Matrix x;
    std::vector<int> y;
};

// Two blobs on either side of the plane x0 + 2 x1 = 0.
Labeled separable(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Labeled d;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % 2);
        const double s = c == 0 ? -1.0 : 1.0;
        double a = rng.normal(0, 1), b = rng.normal(0, 1);
        const double margin = a + 2 * b;
        if (margin * s < 1.0) {
            a += s * (1.0 - margin * s);
        }
        rows.push_back({a, b});
        d.y.push_back(c);
    }
    d.x = Matrix(rows);
    return d;
}

Labeled blobs(std::size_t per_class, std::size_t classes, std::size_t dims, std::uint64_t seed) {
    Rng rng(seed);
    Labeled d;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < per_class * classes; ++i) {
        const auto c = i % classes;
        std::vector<double> r(dims);
        for (std::size_t j = 0; j < dims; ++j) r[j] = rng.normal(j == c % dims ? 6.0 * (1 + double(c / dims)) : 0.0, 0.5);
        rows.push_back(r);
        d.y.push_back(static_cast<int>(c));
    }
    d.x = Matrix(rows);
    return d;
}

Errc code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return Errc::Io;
}

double accuracy(const ProbRows& p, const std::vector<int>& y) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < y.size(); ++i) ok += static_cast<int>(argmax_row(p[i])) == y[i];
    return static_cast<double>(ok) / static_cast<double>(y.size());
}

void expect_simplex(const ProbRows& p) {
    for (const auto& r : p) {
        double s = 0;
        for (double v : r) {
            EXPECT_GE(v, 0.0);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Random forest

TEST(RandomForest, SeparableBlobs) {
    const auto d = blobs(10, 2, 3, 1);
    const auto m = train_random_forest(d.x, d.y, 2, {}, 5);
    EXPECT_EQ(m.trees.size(), 100u);
    const auto p = rf_predict_proba(m, d.x);
    EXPECT_EQ(accuracy(p, d.y), 1.0);
    expect_simplex(p);
}

TEST(RandomForest, LeafCountsSumToSampleCount) {
    const auto d = blobs(15, 3, 4, 2);
    const auto m = train_random_forest(d.x, d.y, 3, {}, 1);
    for (const auto& t : m.trees) {
        double total = 0;
        for (std::size_t k = 0; k < t.feature.size(); ++k)
            if (t.feature[k] < 0)
                for (double c : t.counts[k]) total += c;
        EXPECT_EQ(total, static_cast<double>(d.x.rows));  // bootstrap draws n samples
    }
}

TEST(RandomForest, PureLeavesGiveCertainty) {
    const auto d = blobs(10, 2, 2, 3);
    ForestParams p;
    p.trees = 5;
    const auto m = train_random_forest(d.x, d.y, 2, p, 1);
    Matrix far(1, 2);
    far(0, 0) = 100.0;
    far(0, 1) = -100.0;  // deep inside class 0 territory on every split
    EXPECT_EQ(rf_predict_proba(m, far)[0][0], 1.0);
}

TEST(RandomForest, ForestAveragesSerializedTrees) {
    const auto d = blobs(12, 3, 3, 4);
    ForestParams p;
    p.trees = 10;
    p.max_depth = 2;
    const auto m = train_random_forest(d.x, d.y, 3, p, 9);
    const auto j = to_json(m);
    const auto probe = blobs(5, 3, 3, 99);
    const auto got = rf_predict_proba(m, probe.x);
    for (std::size_t i = 0; i < probe.x.rows; ++i) {
        std::vector<double> avg(3, 0.0);
        for (const auto& t : j["trees"]) {
            std::size_t n = 0;
            while (t["feature"][n].get<int>() >= 0)
                n = probe.x(i, t["feature"][n].get<std::size_t>()) <= t["threshold"][n].get<double>()
                        ? t["left"][n].get<std::size_t>()
                        : t["right"][n].get<std::size_t>();
            const auto counts = t["counts"][n].get<std::vector<double>>();
            const double total = counts[0] + counts[1] + counts[2];
            for (int k = 0; k < 3; ++k) avg[k] += counts[k] / total / 10.0;
        }
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(got[i][k], avg[k], 1e-12);
    }
    ForestParams one = p;
    one.trees = 1;
    const auto single = train_random_forest(d.x, d.y, 3, one, 9);
    EXPECT_EQ(rf_predict_proba(single, probe.x)[0], tree_predict_proba(single.trees[0], probe.x.row(0)));
}

TEST(RandomForest, DeterministicAndScheduleIndependent) {
    const auto d = blobs(10, 3, 5, 5);
    const auto a = to_json(train_random_forest(d.x, d.y, 3, {}, 17, 1)).dump();
    const auto b = to_json(train_random_forest(d.x, d.y, 3, {}, 17, 4)).dump();
    const auto c = to_json(train_random_forest(d.x, d.y, 3, {}, 18, 1)).dump();
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    EXPECT_EQ(random_forest_from_json(nlohmann::ordered_json::parse(a)), train_random_forest(d.x, d.y, 3, {}, 17));
}

TEST(RandomForest, Errors) {
    const auto d = blobs(4, 2, 2, 6);
    EXPECT_EQ(code_of([&] { train_random_forest(d.x, std::vector<int>(d.y.size(), 1), 2, {}, 1); }),
              Errc::DegenerateTraining);
    const auto m = train_random_forest(d.x, d.y, 2, {}, 1);
    EXPECT_EQ(code_of([&] { rf_predict_proba(m, Matrix(1, 3)); }), Errc::Schema);
}

// ---------------------------------------------------------------------------
// SVM

TEST(Svm, LinearSeparableZeroErrors) {
    const auto d = separable(40, 7);
    SvmParams p;
    p.kernel = Kernel::Linear;
    p.c = 10.0;
    const auto m = train_svm_ovr(d.x, d.y, 2, p);
    const auto dv = svm_decision_values(m, d.x);
    for (std::size_t i = 0; i < d.y.size(); ++i) EXPECT_EQ(dv[i][1] > 0.0, d.y[i] == 1) << i;
    EXPECT_EQ(accuracy(svm_predict_proba(m, d.x), d.y), 1.0);
    // The hyperplane direction agrees with the generating one.
    const auto& w = m.machines[1].weights;
    EXPECT_GT(w[0], 0.0);
    EXPECT_NEAR(w[1] / w[0], 2.0, 0.5);
}

TEST(Svm, DuplicatedSamplesKeepDecisionFunction) {
    const auto d = separable(30, 8);
    Matrix twice(2 * d.x.rows, d.x.cols);
    std::vector<int> y2;
    for (std::size_t i = 0; i < 2 * d.x.rows; ++i) {
        for (std::size_t j = 0; j < d.x.cols; ++j) twice(i, j) = d.x(i % d.x.rows, j);
        y2.push_back(d.y[i % d.x.rows]);
    }
    SvmParams p;
    p.kernel = Kernel::Linear;
    p.c = 1000.0;  // no multiplier reaches the box bound, so duplicates split the same solution
    p.tolerance = 1e-8;
    const auto a = train_svm_ovr(d.x, d.y, 2, p);
    const auto b = train_svm_ovr(twice, y2, 2, p);
    const auto da = svm_decision_values(a, d.x), db = svm_decision_values(b, d.x);
    for (std::size_t i = 0; i < d.x.rows; ++i) EXPECT_NEAR(da[i][1], db[i][1], 1e-5);
}

TEST(Svm, PlattMonotoneAndInUnitInterval) {
    const auto d = blobs(20, 3, 3, 9);
    const auto m = train_svm_ovr(d.x, d.y, 3, {});
    for (const auto& s : m.machines) {
        EXPECT_LT(s.platt.a, 0.0);
        double prev = 0.0;
        for (double f = -5.0; f <= 5.0; f += 0.25) {
            const double p = s.platt(f);
            EXPECT_GT(p, 0.0);
            EXPECT_LT(p, 1.0);
            EXPECT_GE(p, prev);
            prev = p;
        }
    }
    const auto p = svm_predict_proba(m, d.x);
    expect_simplex(p);
    EXPECT_EQ(accuracy(p, d.y), 1.0);
}

TEST(Svm, RbfFitsNonLinearBoundary) {
    Rng rng(10);
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    for (int i = 0; i < 80; ++i) {
        const double r = i % 2 ? rng.uniform(0.0, 1.0) : rng.uniform(2.0, 3.0);
        const double t = rng.uniform(0, 6.283);
        rows.push_back({r * std::cos(t), r * std::sin(t)});
        y.push_back(i % 2);
    }
    SvmParams p;
    p.gamma = 1.0;
    p.c = 10.0;
    EXPECT_EQ(accuracy(svm_predict_proba(train_svm_ovr(Matrix(rows), y, 2, p), Matrix(rows)), y), 1.0);
}

TEST(Svm, IterationCapRaisesConvergenceError) {
    const auto d = blobs(20, 3, 3, 11);
    SvmParams p;
    p.max_iterations = 1;
    EXPECT_EQ(code_of([&] { train_svm_ovr(d.x, d.y, 3, p); }), Errc::Convergence);
}

TEST(Svm, DeterministicSerialization) {
    const auto d = blobs(10, 5, 5, 12);
    const auto a = to_json(train_svm_ovr(d.x, d.y, 5, {}, 1)).dump();
    const auto b = to_json(train_svm_ovr(d.x, d.y, 5, {}, 3)).dump();
    EXPECT_EQ(a, b);
    EXPECT_EQ(to_json(svm_from_json(nlohmann::ordered_json::parse(a))).dump(), a);
}

// ---------------------------------------------------------------------------
// Soft voting

TEST(SoftVote, Examples) {
    const ProbRows a = {{0.2, 0.8}, {0.6, 0.4}};
    const auto same = soft_vote({a, a}, {0.3, 0.9});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(same[i][k], a[i][k], 1e-15);
    EXPECT_EQ(soft_vote({{{1.0, 0.0}}, {{0.0, 1.0}}}, {0.5, 0.5}), (ProbRows{{0.5, 0.5}}));
    const ProbRows b = {{0.9, 0.1}, {0.3, 0.7}};
    const auto v = soft_vote({a, b}, {0.3, 0.7});
    EXPECT_NEAR(v[0][0], 0.3 * 0.2 + 0.7 * 0.9, 1e-15);
    EXPECT_NEAR(v[1][1], 0.3 * 0.4 + 0.7 * 0.7, 1e-15);
    EXPECT_THROW(soft_vote({a, {{0.5, 0.5}}}, {1, 1}), Error);
    EXPECT_THROW(soft_vote({a, b}, {0, 0}), Error);
    EXPECT_THROW(soft_vote({a, b}, {-1, 2}), Error);
}

TEST(SoftVote, ArgmaxInvariantUnderWeightScaling) {
    Rng rng(13);
    for (int i = 0; i < 200; ++i) {
        ProbRows a(1), b(1);
        for (auto* r : {&a[0], &b[0]}) {
            double s = 0;
            for (int k = 0; k < 5; ++k) s += r->emplace_back(rng.uniform());
            for (auto& v : *r) v /= s;
        }
        const double w0 = rng.uniform(), w1 = rng.uniform(), k = rng.uniform(0.01, 100);
        EXPECT_EQ(argmax_row(soft_vote({a, b}, {w0, w1})[0]), argmax_row(soft_vote({a, b}, {k * w0, k * w1})[0]));
    }
}

// ---------------------------------------------------------------------------
// MLP

TEST(Mlp, SolvesXor) {
    const Matrix x({{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    const std::vector<int> y = {0, 1, 1, 0};
    MlpParams p;
    p.hidden = {4};
    const auto m = train_mlp(x, y, 2, p, 3);
    EXPECT_EQ(accuracy(mlp_predict_proba(m, x), y), 1.0);
    EXPECT_LT(m.final_loss, 0.1);

    // Four ReLU units can all die on some initializations; most seeds still solve it.
    int solved = 0;
    for (std::uint64_t s = 100; s < 150; ++s) solved += accuracy(mlp_predict_proba(train_mlp(x, y, 2, p, s), x), y) == 1.0;
    EXPECT_GE(solved, 40);
}

TEST(Mlp, GradientMatchesCentralDifferences) {
    Rng rng(14);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::size_t> layers{1 + rng.index(4)};
        const auto depth = 1 + rng.index(2);
        for (std::size_t l = 0; l < depth; ++l) layers.push_back(1 + rng.index(6));
        layers.push_back(2 + rng.index(3));
        auto m = init_mlp(layers, rng.index(1u << 30));
        for (std::size_t k = 0; k < m.params.size(); ++k) m.params[k] += rng.normal(0.0, 0.1);  // non-zero biases
        const std::size_t n = 1 + rng.index(6);
        Matrix x(n, layers.front());
        for (auto& v : x.data) v = rng.normal(0, 1);
        std::vector<int> y(n);
        for (auto& c : y) c = static_cast<int>(rng.index(layers.back()));

        const auto lg = mlp_loss_and_gradient(m, x, y);
        std::vector<double> fd(m.params.size());
        const double h = 1e-6;
        for (std::size_t k = 0; k < m.params.size(); ++k) {
            const double keep = m.params[k];
            m.params[k] = keep + h;
            const double up = mlp_loss_and_gradient(m, x, y).loss;
            m.params[k] = keep - h;
            const double down = mlp_loss_and_gradient(m, x, y).loss;
            m.params[k] = keep;
            fd[k] = (up - down) / (2 * h);
        }
        double diff = 0, na = 0, nf = 0;
        for (std::size_t k = 0; k < fd.size(); ++k) {
            diff += (lg.gradient[k] - fd[k]) * (lg.gradient[k] - fd[k]);
            na += lg.gradient[k] * lg.gradient[k];
            nf += fd[k] * fd[k];
        }
        const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nf), 1e-12});
        EXPECT_LT(rel, 1e-4) << "trial " << trial;
    }
}

TEST(Mlp, OutputsAreSimplexesAndTrainingIsDeterministic) {
    const auto d = blobs(10, 2, 3, 15);
    MlpParams p;
    p.epochs = 50;
    const auto a = train_mlp(d.x, d.y, 2, p, 8);
    expect_simplex(mlp_predict_proba(a, d.x));
    EXPECT_EQ(to_json(a).dump(), to_json(train_mlp(d.x, d.y, 2, p, 8)).dump());
    EXPECT_EQ(mlp_from_json(to_json(a)), a);
    p.batch_size = 4;
    EXPECT_EQ(train_mlp(d.x, d.y, 2, p, 8), train_mlp(d.x, d.y, 2, p, 8));
}

TEST(Mlp, Errors) {
    const auto d = blobs(5, 2, 2, 16);
    EXPECT_EQ(code_of([&] { train_mlp(d.x, std::vector<int>(d.y.size(), 0), 2, {}, 1); }), Errc::DegenerateTraining);
    MlpParams p;
    p.learning_rate = 1e300;
    p.epochs = 5;
    p.hidden = {4};
    const Matrix big({{1e100, -2e100}, {-1e100, 3e100}, {2e100, 1e100}});
    EXPECT_EQ(code_of([&] { train_mlp(big, {0, 1, 0}, 2, p, 1); }), Errc::TrainingDiverged);
}

// ---------------------------------------------------------------------------
// Dual layer

TEST(DualLayer, RoutingRule) {
    EXPECT_EQ(route_decision(DiseaseClass::HCM, std::nullopt), DiseaseClass::HCM);
    EXPECT_EQ(route_decision(DiseaseClass::HCM, std::array<double, 2>{0.9, 0.1}), DiseaseClass::HCM);
    EXPECT_EQ(route_decision(DiseaseClass::MINF, std::array<double, 2>{0.1, 0.9}), DiseaseClass::DCM);
    EXPECT_EQ(route_decision(DiseaseClass::DCM, std::array<double, 2>{0.7, 0.3}), DiseaseClass::MINF);
    EXPECT_EQ(route_decision(DiseaseClass::DCM, std::array<double, 2>{0.5, 0.5}), DiseaseClass::MINF);
}

TEST(DualLayer, SeparableClustersPerfectTestAccuracy) {
    const auto train = fixture::gaussian_clusters(8, 1, "tr");
    const auto test = fixture::gaussian_clusters(4, 2, "te");
    const auto m = train_dual(train, {}, 3);
    EXPECT_EQ(m.layer2_schema.size(), 11u);
    std::vector<DiseaseClass> pred;
    for (const auto& p : predict_dual(m, test)) {
        pred.push_back(p.predicted);
        double s = 0;
        for (double v : p.layer1_proba) s += v;
        EXPECT_NEAR(s, 1.0, 1e-9);
        const bool l2 = p.layer1 == DiseaseClass::MINF || p.layer1 == DiseaseClass::DCM;
        EXPECT_EQ(p.layer2_proba.has_value(), l2);
        if (!l2) EXPECT_EQ(p.predicted, p.layer1);
    }
    const auto r = evaluate(pred, fixture::labels(test));
    EXPECT_EQ(r.accuracy, 1.0);
}

TEST(DualLayer, SecondLayerResolvesMinfDcmOverlap) {
    const auto train = fixture::minf_dcm_overlap(20, 21, "tr");
    const auto test = fixture::minf_dcm_overlap(40, 22, "te");
    const auto m = train_dual(train, {}, 5);
    const auto truth = fixture::labels(test);
    std::vector<DiseaseClass> dual, single;
    for (const auto& p : predict_dual(m, test)) {
        dual.push_back(p.predicted);
        single.push_back(p.layer1);
    }
    const double a1 = evaluate(single, truth).accuracy, a2 = evaluate(dual, truth).accuracy;
    EXPECT_LT(a1, a2);
    RecordProperty("layer1_accuracy", std::to_string(a1));
    RecordProperty("dual_accuracy", std::to_string(a2));
}

TEST(DualLayer, MissingClassRejected) {
    auto t = fixture::gaussian_clusters(3, 1);
    std::erase_if(t.rows, [](const FeatureRow& r) { return r.group == DiseaseClass::ARV; });
    EXPECT_EQ(code_of([&] { train_dual(t, {}, 1); }), Errc::DegenerateTraining);
}

TEST(DualLayer, SchemaMismatchAtPredict) {
    const auto m = train_dual(fixture::gaussian_clusters(4, 1), {}, 1);
    auto t = fixture::gaussian_clusters(1, 2);
    std::swap(t.columns[0], t.columns[1]);
    EXPECT_EQ(code_of([&] { predict_dual(m, t); }), Errc::Schema);
}

TEST(ModelFile, RoundTripAndIntegrity) {
    const auto train = fixture::gaussian_clusters(5, 1);
    DualConfig cfg;
    cfg.rf.trees = 20;
    cfg.mlp.epochs = 100;
    const auto m = train_dual(train, cfg, 4);
    const auto bytes = save_model(m);
    EXPECT_EQ(bytes, save_model(train_dual(train, cfg, 4)));
    const auto back = load_model(bytes);
    EXPECT_EQ(save_model(back), bytes);
    const auto probe = fixture::gaussian_clusters(2, 9);
    const auto p1 = predict_dual(m, probe), p2 = predict_dual(back, probe);
    for (std::size_t i = 0; i < p1.size(); ++i) {
        EXPECT_EQ(p1[i].layer1_proba, p2[i].layer1_proba);
        EXPECT_EQ(p1[i].layer2_proba, p2[i].layer2_proba);
    }

    auto flipped = bytes;
    const auto at = flipped.find("\"checksum\":\"") + 12;
    flipped[at] = flipped[at] == '0' ? '1' : '0';
    EXPECT_EQ(code_of([&] { load_model(flipped); }), Errc::Integrity);

    auto tampered = bytes;
    const auto w = tampered.find("\"voting_weights\":[") + 18;
    tampered[w] = tampered[w] == '0' ? '1' : '0';
    EXPECT_EQ(code_of([&] { load_model(tampered); }), Errc::Integrity);

    auto versioned = bytes;
    versioned.replace(versioned.find("\"format_version\":1"), 18, "\"format_version\":2");
    EXPECT_EQ(code_of([&] { load_model(versioned); }), Errc::UnsupportedVersion);
    EXPECT_EQ(code_of([&] { load_model("{not json"); }), Errc::Integrity);
}

TEST(Evaluate, Examples) {
    std::vector<DiseaseClass> truth;
    for (auto c : kDiseaseClasses) truth.insert(truth.end(), 2, c);
    const auto perfect = evaluate(truth, truth);
    EXPECT_EQ(perfect.accuracy, 1.0);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(perfect.confusion[i][j], i == j ? 2u : 0u);
    const auto nor = evaluate(std::vector<DiseaseClass>(10, DiseaseClass::NOR), truth);
    EXPECT_EQ(nor.accuracy, 0.2);
    EXPECT_EQ(nor.recall[0], 1.0);
    EXPECT_EQ(nor.recall[3], 0.0);

    // Hand tally: truth MINF,MINF,DCM,HCM ; pred MINF,DCM,DCM,NOR.
    const auto r = evaluate({DiseaseClass::MINF, DiseaseClass::DCM, DiseaseClass::DCM, DiseaseClass::NOR},
                            {DiseaseClass::MINF, DiseaseClass::MINF, DiseaseClass::DCM, DiseaseClass::HCM});
    EXPECT_EQ(r.confusion[1][1], 1u);
    EXPECT_EQ(r.confusion[1][2], 1u);
    EXPECT_EQ(r.confusion[2][2], 1u);
    EXPECT_EQ(r.confusion[3][0], 1u);
    EXPECT_EQ(r.accuracy, 0.5);
    EXPECT_EQ(r.recall[1], 0.5);
    EXPECT_FALSE(r.recall[0].has_value());
    EXPECT_THROW(evaluate({DiseaseClass::NOR}, {}), Error);
}

TEST(GridSearch, PicksFirstBest) {
    const auto train = fixture::gaussian_clusters(5, 1, "tr");
    const auto val = fixture::gaussian_clusters(2, 2, "va");
    DualConfig base;
    base.rf.trees = 10;
    base.mlp.epochs = 50;
    SearchGrid g;
    g.svm_c = {0.5, 2.0};
    g.rf_trees = {5, 10};
    const auto r = grid_search(train, val, base, g, 1);
    EXPECT_EQ(r.evaluated.size(), 4u);
    EXPECT_EQ(r.best_accuracy, 1.0);
    EXPECT_EQ(r.best.rf.trees, 5u);
    EXPECT_EQ(r.best.svm.c, 0.5);
}
