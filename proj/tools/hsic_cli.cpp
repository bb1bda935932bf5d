// Command-line front end for the hyperspectral center-loss pipeline.
//
// Subcommands: convert, normalize, split, train, extract, classify,
// evaluate, export-map. Exit codes: 0 success, 2 usage error, 3 data error,
// 4 numeric divergence.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hsic/classify.hpp"
#include "hsic/data.hpp"
#include "hsic/losses.hpp"
#include "hsic/metrics.hpp"
#include "hsic/nncore.hpp"
#include "hsic/png.hpp"
#include "hsic/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw hsic::DataError("cannot open file for digest: " + path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<std::uint8_t>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (!in) break;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json config_to_json(const hsic::TrainConfig& cfg) {
    json j;
    j["batch_size"] = cfg.batch_size;
    j["lr0"] = cfg.lr0;
    j["decay_every"] = cfg.decay_every;
    j["decay_multiplier"] = cfg.decay_multiplier;
    j["max_batches"] = cfg.max_batches;
    j["lambda"] = cfg.lambda;
    j["alpha"] = cfg.alpha;
    j["dropout_ratio"] = cfg.dropout_ratio;
    j["virtual_per_class"] = cfg.virtual_per_class;
    j["real_per_class"] = cfg.real_per_class;
    j["q_min"] = cfg.q_min;
    j["q_max"] = cfg.q_max;
    j["seed"] = cfg.seed;
    j["hidden_dims"] = cfg.hidden_dims;
    j["normalize"] = cfg.normalize == hsic::NormalizeMode::PerBand ? "per_band" : "global";
    j["trace_stride"] = cfg.trace_stride;
    return j;
}

int cmd_convert(const std::string& in_path, const std::string& out_path, std::size_t h,
                std::size_t w, std::size_t l, const std::string& dtype) {
    std::ifstream in(in_path, std::ios::binary);
    if (!in) throw hsic::DataError("cannot open raw dump: " + in_path);
    hsic::HyperCube cube(h, w, l);
    const std::size_t n = cube.values.size();
    if (dtype == "f64") {
        in.read(reinterpret_cast<char*>(cube.values.data()),
                static_cast<std::streamsize>(n * 8));
    } else {
        std::vector<float> tmp(n);
        in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(n * 4));
        for (std::size_t i = 0; i < n; ++i) cube.values[i] = tmp[i];
    }
    if (in.gcount() != static_cast<std::streamsize>(n * (dtype == "f64" ? 8 : 4)))
        throw hsic::DataError(in_path + ": raw dump smaller than declared dimensions");
    hsic::save_cube(cube, out_path);
    std::cout << "wrote " << out_path << " (" << h << "x" << w << "x" << l << ")\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& cube_path,
              const std::string& gt_path, const std::string& out_dir, bool seed_set,
              std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    hsic::TrainConfig cfg = hsic::load_config(config_path);
    if (seed_set) cfg.seed = seed;

    hsic::HyperCube cube = hsic::load_cube(cube_path);
    hsic::GroundTruth gt = hsic::load_groundtruth(gt_path);
    if (gt.height != cube.height || gt.width != cube.width)
        throw hsic::DataError("groundtruth shape does not match cube");

    hsic::normalize_cube(cube, cfg.normalize);
    hsic::SplitMask mask = hsic::split_train_test(gt, cfg.real_per_class, cfg.seed);
    hsic::SampleSet real = hsic::gather_training_samples(cube, gt, mask);
    hsic::SampleSet virt =
        hsic::make_virtual_samples(real, cfg.virtual_per_class, cfg.q_min, cfg.q_max, cfg.seed);
    hsic::SampleSet augmented = hsic::concat_samples(real, virt);

    hsic::TrainResult result = hsic::train_model(augmented, gt.num_classes, cfg);

    fs::create_directories(out_dir);
    const std::string net_path = (fs::path(out_dir) / "network.ckpt").string();
    const std::string rc_path = (fs::path(out_dir) / "running_centers.ckpt").string();
    const std::string ec_path = (fs::path(out_dir) / "estimated_centers.ckpt").string();
    const std::string mask_path = (fs::path(out_dir) / "mask.bin").string();
    const std::string trace_path = (fs::path(out_dir) / "trace.csv").string();
    const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();

    hsic::save_network(result.net, net_path);
    hsic::save_centers(result.centers.centers, rc_path);
    hsic::EstimatedCenters est = hsic::estimate_centers(result.net, real);
    hsic::save_centers(est.centers, ec_path);
    hsic::save_mask(mask, mask_path);
    hsic::save_trace_csv(result.trace, trace_path);

    const auto t1 = std::chrono::steady_clock::now();
    json manifest;
    manifest["config"] = config_to_json(cfg);
    manifest["seed"] = cfg.seed;
    manifest["inputs"] = {{"config", {{"path", config_path}, {"fnv1a64", hex64(fnv1a64_file(config_path))}}},
                          {"cube", {{"path", cube_path}, {"fnv1a64", hex64(fnv1a64_file(cube_path))}}},
                          {"groundtruth", {{"path", gt_path}, {"fnv1a64", hex64(fnv1a64_file(gt_path))}}}};
    manifest["outputs"] = {net_path, rc_path, ec_path, mask_path, trace_path};
    manifest["wall_seconds"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count() / 1000.0;
    manifest["diverged"] = result.diverged;
    std::ofstream mout(manifest_path);
    mout << manifest.dump(2) << '\n';

    if (result.diverged) {
        std::cerr << "training diverged; partial trace written to " << trace_path << '\n';
        return 4;
    }
    std::cout << "trained " << result.trace.records.size() << " trace checkpoints; artifacts in "
              << out_dir << '\n';
    return 0;
}

hsic::ClassifyMode parse_mode(const std::string& mode, const std::string& scales_csv) {
    auto parse_scales = [](const std::string& csv) {
        hsic::ScaleSet set;
        std::stringstream ss(csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) set.scales.push_back(std::stoull(tok));
        set.validate();
        return set;
    };
    if (mode == "scc") {
        if (!scales_csv.empty())
            throw std::invalid_argument("--scales only applies to asscc mode");
        return hsic::SccMode{};
    }
    if (mode.rfind("sscc:", 0) == 0) {
        hsic::SsccMode m;
        m.scale = std::stoull(mode.substr(5));
        if (m.scale < 3 || m.scale % 2 == 0)
            throw std::invalid_argument("sscc scale must be an odd number >= 3");
        return m;
    }
    if (mode == "asscc") {
        hsic::AssccMode m;
        if (!scales_csv.empty()) m.scales = parse_scales(scales_csv);
        return m;
    }
    throw std::invalid_argument("unknown mode '" + mode + "' (scc | sscc:<scale> | asscc)");
}

int cmd_classify(const std::string& fm_path, const std::string& mask_path,
                 const std::string& centers_path, const std::string& mode_str,
                 const std::string& scales_csv, const std::string& out_path,
                 const std::string& votes_path) {
    const hsic::ClassifyMode mode = parse_mode(mode_str, scales_csv);
    hsic::FeatureMap fm = hsic::load_feature_map(fm_path);
    hsic::SplitMask mask = hsic::load_mask(mask_path);
    hsic::EstimatedCenters centers;
    centers.centers = hsic::load_centers(centers_path);

    hsic::PredictionMap pred = hsic::classify_image(fm, mask, centers, mode);
    hsic::save_prediction(pred, out_path);

    if (!votes_path.empty()) {
        if (!std::holds_alternative<hsic::AssccMode>(mode))
            throw std::invalid_argument("--dump-votes requires asscc mode");
        const auto& scales = std::get<hsic::AssccMode>(mode).scales;
        std::ofstream vout(votes_path);
        vout << "row,col,scale,label,distance,weight\n";
        vout.precision(17);
        for (std::size_t r = 0; r < fm.height; ++r)
            for (std::size_t c = 0; c < fm.width; ++c) {
                if (mask.at(r, c) != hsic::SplitKind::Test) continue;
                hsic::append_vote_csv(vout, r, c,
                                      hsic::asscc_classify(fm, mask, centers, r, c, scales));
            }
    }
    std::cout << "wrote " << out_path << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hyperspectral center-loss classification pipeline"};
    app.require_subcommand(1);

    // convert
    auto* convert = app.add_subcommand("convert", "Raw headerless float dump to cube file");
    std::string cv_in, cv_out, cv_dtype = "f64";
    std::size_t cv_h = 0, cv_w = 0, cv_l = 0;
    convert->add_option("--in", cv_in, "Raw float dump, pixel-major band-minor")->required();
    convert->add_option("--out", cv_out)->required();
    convert->add_option("--height", cv_h)->required();
    convert->add_option("--width", cv_w)->required();
    convert->add_option("--bands", cv_l)->required();
    convert->add_option("--dtype", cv_dtype)->check(CLI::IsMember({"f32", "f64"}));

    // normalize
    auto* normalize = app.add_subcommand("normalize", "Zero-mean unit-variance normalization");
    std::string nm_in, nm_out, nm_mode = "per_band";
    normalize->add_option("--in", nm_in)->required();
    normalize->add_option("--out", nm_out)->required();
    normalize->add_option("--mode", nm_mode)->check(CLI::IsMember({"per_band", "global"}));

    // split
    auto* split = app.add_subcommand("split", "Random per-class train/test split");
    std::string sp_gt, sp_out;
    std::size_t sp_per_class = 200;
    std::uint64_t sp_seed = 0;
    split->add_option("--gt", sp_gt)->required();
    split->add_option("--per-class", sp_per_class);
    split->add_option("--seed", sp_seed);
    split->add_option("--out", sp_out)->required();

    // train
    auto* train = app.add_subcommand("train", "Train the network under joint supervision");
    std::string tr_config, tr_cube, tr_gt, tr_out;
    std::uint64_t tr_seed = 0;
    train->add_option("--config", tr_config)->required();
    train->add_option("--cube", tr_cube)->required();
    train->add_option("--gt", tr_gt)->required();
    train->add_option("--out", tr_out, "Output directory")->required();
    auto* tr_seed_opt = train->add_option("--seed", tr_seed, "Overrides the config seed");

    // extract
    auto* extract = app.add_subcommand("extract", "Whole-image feature extraction");
    std::string ex_net, ex_cube, ex_out, ex_norm = "per_band";
    extract->add_option("--net", ex_net)->required();
    extract->add_option("--cube", ex_cube)->required();
    extract->add_option("--out", ex_out)->required();
    extract->add_option("--normalize", ex_norm, "per_band | global | none")
        ->check(CLI::IsMember({"per_band", "global", "none"}));

    // classify
    auto* classify = app.add_subcommand("classify", "Label test pixels");
    std::string cl_fm, cl_mask, cl_centers, cl_mode = "asscc", cl_scales, cl_out, cl_votes;
    classify->add_option("--features", cl_fm)->required();
    classify->add_option("--mask", cl_mask)->required();
    classify->add_option("--centers", cl_centers)->required();
    classify->add_option("--mode", cl_mode, "scc | sscc:<scale> | asscc");
    classify->add_option("--scales", cl_scales, "Comma-separated odd scales (asscc)");
    classify->add_option("--out", cl_out)->required();
    classify->add_option("--dump-votes", cl_votes, "Per-scale vote CSV (asscc)");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Confusion matrix and OA/AA/kappa");
    std::string ev_pred, ev_gt, ev_mask, ev_out;
    evaluate->add_option("--pred", ev_pred)->required();
    evaluate->add_option("--gt", ev_gt)->required();
    evaluate->add_option("--mask", ev_mask)->required();
    evaluate->add_option("--out", ev_out)->required();

    // export-map
    auto* export_map = app.add_subcommand("export-map", "Prediction map to indexed PNG");
    std::string xm_pred, xm_out;
    export_map->add_option("--pred", xm_pred)->required();
    export_map->add_option("--out", xm_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*convert) return cmd_convert(cv_in, cv_out, cv_h, cv_w, cv_l, cv_dtype);
        if (*normalize) {
            hsic::HyperCube cube = hsic::load_cube(nm_in);
            hsic::normalize_cube(cube, nm_mode == "global" ? hsic::NormalizeMode::Global
                                                           : hsic::NormalizeMode::PerBand);
            hsic::save_cube(cube, nm_out);
            std::cout << "wrote " << nm_out << '\n';
            return 0;
        }
        if (*split) {
            hsic::GroundTruth gt = hsic::load_groundtruth(sp_gt);
            hsic::save_mask(hsic::split_train_test(gt, sp_per_class, sp_seed), sp_out);
            std::cout << "wrote " << sp_out << '\n';
            return 0;
        }
        if (*train) return cmd_train(tr_config, tr_cube, tr_gt, tr_out, !tr_seed_opt->empty(), tr_seed);
        if (*extract) {
            hsic::Network net = hsic::load_network(ex_net);
            hsic::HyperCube cube = hsic::load_cube(ex_cube);
            if (ex_norm != "none")
                hsic::normalize_cube(cube, ex_norm == "global" ? hsic::NormalizeMode::Global
                                                               : hsic::NormalizeMode::PerBand);
            hsic::save_feature_map(hsic::extract_feature_map(net, cube), ex_out);
            std::cout << "wrote " << ex_out << '\n';
            return 0;
        }
        if (*classify)
            return cmd_classify(cl_fm, cl_mask, cl_centers, cl_mode, cl_scales, cl_out, cl_votes);
        if (*evaluate) {
            hsic::PredictionMap pred = hsic::load_prediction(ev_pred);
            hsic::GroundTruth gt = hsic::load_groundtruth(ev_gt);
            hsic::SplitMask mask = hsic::load_mask(ev_mask);
            const hsic::ConfusionMatrix cm = hsic::confusion(pred, gt, mask);
            const hsic::MetricsReport rep = hsic::oa_aa_kappa(cm);
            hsic::save_metrics_csv(rep, gt.class_names, ev_out);
            std::cout << "OA " << rep.oa << " AA " << rep.aa << " kappa " << rep.kappa << '\n';
            return 0;
        }
        if (*export_map) {
            hsic::PredictionMap pred = hsic::load_prediction(xm_pred);
            std::uint16_t max_label = 0;
            for (std::uint16_t lab : pred.labels) max_label = std::max(max_label, lab);
            hsic::export_map_png(pred, hsic::default_palette(max_label), xm_out);
            std::cout << "wrote " << xm_out << '\n';
            return 0;
        }
    } catch (const hsic::DivergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const hsic::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 2;
}
