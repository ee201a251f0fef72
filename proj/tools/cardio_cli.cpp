// cardio: command-line front end for the pipeline commands.
//
// Exit codes: 0 success (warnings allowed), 1 usage or config error,
// 2 data error, 3 internal error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cardio/pipeline.hpp"

namespace {

namespace pl = cardio::pipeline;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::string output;
};

pl::PipelineConfig effective(const Globals& g) {
    pl::PipelineConfig c;
    if (!g.config.empty()) c = pl::load_config(g.config);
    if (g.seed) c.seed = *g.seed;
    if (g.workers) c.workers = *g.workers;
    if (!g.output.empty()) c.output_dir = g.output;
    return c;
}

void print_summary(const pl::Json& r) {
    pl::Json s = r;
    s.erase("config");
    s.erase("case_reports");
    std::cout << s.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cardiac MRI segmentation analysis: indices, features, metrics, agreement and diagnosis"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "RNG seed (overrides config)");
    app.add_option("--workers", g.workers, "worker threads (overrides config)")->check(CLI::PositiveNumber);
    app.add_option("--output", g.output, "output directory (overrides config)");

    std::string data, source = "pred", unit;
    auto add_data = [&](CLI::App* sub) { sub->add_option("--data", data, "data root with one directory per case"); };

    auto* validate = app.add_subcommand("validate", "load every case and report header summaries and warnings");
    add_data(validate);

    auto* features = app.add_subcommand("features", "extract the feature CSV and quarantine list");
    add_data(features);
    features->add_option("--source", source, "volumes to measure")->check(CLI::IsMember({"pred", "truth"}));
    features->add_option("--mwt-unit", unit, "wall thickness unit")->check(CLI::IsMember({"mm", "voxel"}));

    auto* segscore = app.add_subcommand("segscore", "Dice, HD95 and ASD of predictions against ground truth");
    add_data(segscore);
    segscore->add_option("--unit", unit, "distance unit")->check(CLI::IsMember({"voxel", "mm"}));

    std::vector<std::string> maps;
    std::optional<double> temperature;
    auto* ssl_eval = app.add_subcommand("ssl-eval", "cross-consistency loss of three decoder probability maps");
    ssl_eval->add_option("maps", maps, "three float32 probability-map NIfTI files")->required()->expected(3);
    ssl_eval->add_option("--temperature", temperature, "sharpening temperature");

    std::string auto_csv, ref_csv;
    bool no_plot = false;
    auto* agreement = app.add_subcommand("agreement", "Bland-Altman statistics of two feature CSVs");
    agreement->add_option("--auto", auto_csv, "automatic feature CSV")->required();
    agreement->add_option("--reference", ref_csv, "reference feature CSV")->required();
    agreement->add_flag("--no-plot", no_plot, "skip the per-index plot-data files");

    std::string features_csv, model, split_csv, split_name = "test", predictions;
    auto* train = app.add_subcommand("train", "train the dual-layer classifier");
    train->add_option("--features", features_csv, "labelled feature CSV")->required();

    auto* predict = app.add_subcommand("predict", "predict disease classes with a trained model");
    predict->add_option("--features", features_csv, "feature CSV")->required();
    predict->add_option("--model", model, "model file from train")->required();
    predict->add_option("--split", split_csv, "split CSV from train; restricts prediction to one split");
    predict->add_option("--split-name", split_name, "split to predict when --split is given");

    auto* report = app.add_subcommand("report", "confusion matrix, accuracy and combined run report");
    report->add_option("--predictions", predictions, "predictions CSV")->required();
    report->add_option("--features", features_csv, "feature CSV holding the group labels")->required();

    std::size_t per_class = 10;
    std::string prefix = "case";
    auto* phantom = app.add_subcommand("phantom", "write a synthetic five-class phantom corpus to --output");
    phantom->add_option("--per-class", per_class, "cases per class")->check(CLI::PositiveNumber);
    phantom->add_option("--prefix", prefix, "case id prefix");

    auto* run = app.add_subcommand("run", "validate, features, segscore, agreement, train, predict and report");
    add_data(run);

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        auto c = effective(g);
        if (!data.empty()) c.data_root = data;
        pl::validate_config(c);
        pl::Json r;
        if (validate->parsed()) {
            r = pl::cmd_validate(c);
        } else if (features->parsed()) {
            if (!unit.empty()) c.features.mwt_unit = unit == "mm" ? cardio::DistanceUnit::Millimetre : cardio::DistanceUnit::Voxel;
            r = pl::cmd_features(c, source == "truth" ? pl::VolumeSource::Truth : pl::VolumeSource::Prediction);
        } else if (segscore->parsed()) {
            if (!unit.empty()) c.seg_unit = unit == "mm" ? cardio::DistanceUnit::Millimetre : cardio::DistanceUnit::Voxel;
            r = pl::cmd_segscore(c);
        } else if (ssl_eval->parsed()) {
            if (temperature) c.temperature = *temperature;
            pl::validate_config(c);
            r = pl::cmd_ssl_eval(c, {maps[0], maps[1], maps[2]});
        } else if (agreement->parsed()) {
            r = pl::cmd_agreement(c, auto_csv, ref_csv, !no_plot);
        } else if (train->parsed()) {
            r = pl::cmd_train(c, features_csv);
        } else if (predict->parsed()) {
            r = pl::cmd_predict(c, features_csv, model,
                                split_csv.empty() ? std::nullopt : std::optional<std::filesystem::path>(split_csv), split_name);
        } else if (report->parsed()) {
            r = pl::cmd_report(c, predictions, features_csv);
        } else if (phantom->parsed()) {
            r = pl::cmd_phantom(c, per_class, prefix);
        } else if (run->parsed()) {
            r = pl::run_all(c);
        }
        print_summary(r);
        return kOk;
    } catch (const cardio::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == cardio::Errc::Config ? kUsage : kData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternal;
    }
}
