// Command-line front end: ingest, pca, evaluate, ttest, run, fixture.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "pcaharm/pcaharm.hpp"

namespace {

using namespace pcaharm;

std::vector<double> read_numbers(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read '" + path.string() + "'");
    std::vector<double> out;
    std::string line;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                std::size_t used = 0;
                double v = std::stod(tok, &used);
                out.push_back(v);
            } catch (const std::logic_error&) {
                // header or label
            }
        }
    }
    return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read '" + path.string() + "'");
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

std::pair<std::size_t, std::size_t> guess_shape(std::size_t d) {
    auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d))));
    if (side * side != d) throw Error("cannot infer image shape from " + std::to_string(d) + " pixels; pass --shape");
    return {side, side};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PCA dataset harmonisation and cross-dataset segmentation evaluation"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Load, resize, flatten and split an image/mask directory");
    std::string in_dir, pattern = "*.png", mask_pattern = "{id}_mask.png", mask_dir, out_prefix, resize;
    std::uint64_t seed = 42;
    bool require_tumor = false, f32 = false;
    ingest->add_option("--dir", in_dir, "Dataset directory")->required();
    ingest->add_option("--pattern", pattern, "Image glob");
    ingest->add_option("--mask-pattern", mask_pattern, "Mask filename, {id} is replaced by the image stem");
    ingest->add_option("--mask-dir", mask_dir, "Mask directory (default: --dir)");
    ingest->add_option("--out", out_prefix, "Output prefix")->required();
    ingest->add_option("--resize", resize, "Target size WxH");
    ingest->add_option("--seed", seed, "Split seed");
    ingest->add_flag("--require-tumor", require_tumor, "Drop records with an empty mask");
    ingest->add_flag("--f32", f32, "Store 32-bit scalars");

    // pca
    auto* pca = app.add_subcommand("pca", "Fit, reconstruct and inspect PCA models");
    pca->require_subcommand(1);
    auto* fit = pca->add_subcommand("fit", "Fit a PCA model to a UMX1 matrix");
    std::string fit_in, fit_out, route = "auto";
    fit->add_option("--in", fit_in, "Input .umx")->required();
    fit->add_option("--out", fit_out, "Output model (.upm)")->required();
    fit->add_option("--route", route, "auto | gram | covariance");
    auto* rec = pca->add_subcommand("reconstruct", "Reconstruct the fitted samples from the leading components");
    std::string rec_model, rec_k = "auto", rec_out, rec_shape, rec_ids;
    bool raw = false;
    rec->add_option("--model", rec_model, "Model file")->required();
    rec->add_option("--k", rec_k, "auto | <int> | variance:<fraction> | kaiser:<threshold>");
    rec->add_option("--out", rec_out, "Output .umx file or PNG directory")->required();
    rec->add_option("--shape", rec_shape, "Image shape WxH for PNG output (default: square)");
    rec->add_option("--ids", rec_ids, "Id list (one per line) naming PNG outputs");
    rec->add_flag("--raw", raw, "Do not clamp to [0,1] (UMX output only)");
    auto* scree = pca->add_subcommand("scree", "Export eigenvalues and cumulative explained variance");
    std::string scree_model, scree_out;
    scree->add_option("--model", scree_model, "Model file")->required();
    scree->add_option("--out", scree_out, "Output CSV")->required();

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score prediction PNGs against ground-truth masks");
    std::string pred_dir, gt_dir, eval_out, gt_pattern = "{id}.png";
    double threshold = 0.5;
    evaluate->add_option("--pred", pred_dir, "Prediction directory")->required();
    evaluate->add_option("--gt", gt_dir, "Ground-truth mask directory")->required();
    evaluate->add_option("--out", eval_out, "Per-image CSV")->required();
    evaluate->add_option("--gt-pattern", gt_pattern, "Mask filename, {id} is replaced by the prediction stem");
    evaluate->add_option("--threshold", threshold, "Binarisation threshold");

    // ttest
    auto* ttest = app.add_subcommand("ttest", "Two-tailed t-test between two samples");
    std::string a_csv, b_csv;
    bool paired = false, pooled = false;
    ttest->add_option("--a", a_csv, "File with the first sample (numbers, comma or newline separated)")->required();
    ttest->add_option("--b", b_csv, "File with the second sample")->required();
    ttest->add_flag("--paired", paired, "Paired test on b - a");
    ttest->add_flag("--pooled", pooled, "Equal-variance test instead of Welch");

    // run
    auto* run = app.add_subcommand("run", "Run the cross-dataset experiment");
    std::string config, results_from, stage, run_out;
    run->add_option("--config", config, "Run configuration file");
    run->add_option("--results-from", results_from, "Directory with results.csv; only reports are produced");
    run->add_option("--stage", stage, "ingest | pca | train | evaluate | report");
    run->add_option("--out", run_out, "Output directory when no config is given");

    // fixture
    auto* fixture = app.add_subcommand("fixture", "Write the embedded published recall table as results.csv");
    std::string fixture_out;
    fixture->add_option("--out", fixture_out, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);
    if (verbose) log::set_level(log::Level::debug);

    try {
        if (*ingest) {
            DatasetLayout layout;
            layout.image_pattern = pattern;
            layout.mask_pattern = mask_pattern;
            if (!mask_dir.empty()) layout.mask_dir = mask_dir;
            layout.require_tumor = require_tumor;
            auto records = load_dataset(in_dir, layout);
            if (!resize.empty()) {
                auto [w, h] = RunConfig::parse_size(resize);
                for (auto& r : records) r = resize_record(r, w, h);
            }
            const int width = f32 ? 4 : 8;
            write_umx(out_prefix + ".umx", flatten(records, Channel::images), width);
            write_umx(out_prefix + "_masks.umx", flatten(records, Channel::masks), width);
            if (records.size() >= 3) {
                write_split(out_prefix + ".split.csv", split_dataset(records, {}, seed));
            } else {
                log::warn("fewer than 3 records, no split written");
            }
            std::cout << records.size() << " records\n";
        } else if (*fit) {
            FitRoute r = route == "gram" ? FitRoute::gram : route == "covariance" ? FitRoute::covariance : FitRoute::automatic;
            const PcaModel model = fit_pca(read_umx(fit_in), r);
            save_model(fit_out, model);
            std::cout << "n=" << model.n_samples << " d=" << model.dims() << " k_max=" << model.k_max() << '\n';
        } else if (*rec) {
            const PcaModel model = load_model(rec_model);
            const ComponentSelection sel = select_components(model, SelectionPolicy::parse(rec_k));
            std::cout << "k=" << sel.k << " criterion=" << to_string(sel.criterion)
                      << " achieved_variance=" << sel.achieved_variance << '\n';
            if (fs::path(rec_out).extension() == ".umx") {
                write_umx(rec_out, raw ? reconstruct_raw(model, sel.k) : reconstruct(model, sel.k));
            } else {
                const DataMatrix m = reconstruct(model, sel.k);
                auto [w, h] = rec_shape.empty() ? guess_shape(m.cols) : RunConfig::parse_size(rec_shape);
                std::vector<std::string> ids = rec_ids.empty() ? std::vector<std::string>{} : read_lines(rec_ids);
                if (!ids.empty() && ids.size() != m.rows) throw Error("--ids has a different number of lines than samples");
                fs::create_directories(rec_out);
                for (std::size_t i = 0; i < m.rows; ++i) {
                    const std::string id = ids.empty() ? std::to_string(i) : ids[i];
                    write_png(fs::path(rec_out) / (id + ".png"), unflatten_row(m, i, w, h));
                }
            }
        } else if (*scree) {
            write_scree_csv(fs::path(scree_out), scree_export(load_model(scree_model)));
        } else if (*evaluate) {
            EvaluateOptions opts{gt_pattern, threshold};
            const auto scores = evaluate_predictions(pred_dir, gt_dir, std::nullopt, opts);
            write_image_scores_csv(eval_out, scores);
            const SegmentationScores mean = aggregate(scores);
            std::printf("images=%zu recall=%.6f precision=%.6f dice=%.6f\n", scores.size(), mean.recall,
                        mean.precision, mean.dice);
        } else if (*ttest) {
            const auto a = read_numbers(a_csv);
            const auto b = read_numbers(b_csv);
            const stats::TestResult r = paired   ? stats::paired_t_test(a, b)
                                        : pooled ? stats::pooled_t_test(a, b)
                                                 : stats::welch_t_test(a, b);
            std::printf("test=%s t=%.6f df=%.6f p=%.6g\n", stats::to_string(r.kind), r.t, r.df, r.p);
        } else if (*run) {
            RunConfig cfg;
            if (!config.empty()) {
                cfg = RunConfig::load(config);
            } else if (!results_from.empty()) {
                cfg.output_dir = run_out.empty() ? fs::path(results_from) : fs::path(run_out);
            } else {
                throw Error("run needs --config (or --results-from)");
            }
            if (!run_out.empty()) cfg.output_dir = run_out;
            RunOptions opts;
            if (!results_from.empty()) opts.results_from = fs::path(results_from);
            if (!stage.empty()) opts.stage = parse_stage(stage);
            return run_pipeline(cfg, opts);
        } else if (*fixture) {
            fs::create_directories(fixture_out);
            write_results_csv(fs::path(fixture_out) / "results.csv", fixture::table2());
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
