#include "deepshore/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "deepshore/container.hpp"
#include "deepshore/error.hpp"
#include "deepshore/pipeline.hpp"

namespace deepshore {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Option plumbing

/// Flags shared by the pipeline subcommands; unset values leave the config alone.
struct PipelineFlags {
    std::optional<std::string> subcase;
    std::vector<std::string> subcases;
    std::optional<double> withhold_b;
    std::vector<double> shells;
    std::optional<int> radial_order;
    std::optional<double> lambda_n;
    std::optional<double> lambda_l;
    std::optional<double> nonneg_epsilon;
    std::optional<int> k_folds;
    std::optional<int> batch_size;
    std::optional<int> epochs;
    std::optional<double> learning_rate;
    std::optional<std::uint64_t> seed;
    std::optional<double> zeta0;
    std::optional<std::size_t> zeta_subsample;
    std::optional<int> eval_folds;
    std::optional<int> max_eval_folds;
    bool flat = false;
};

void add_shore_flags(CLI::App* app, PipelineFlags& f) {
    app->add_option("--shells", f.shells, "Input b-values to keep (default: all)");
    app->add_option("--radial-order", f.radial_order, "SHORE radial order (default 6)");
    app->add_option("--lambda-n", f.lambda_n, "Radial regularization weight (default 1e-8)");
    app->add_option("--lambda-l", f.lambda_l, "Angular regularization weight (default 1e-8)");
    app->add_option("--nonneg-epsilon", f.nonneg_epsilon, "Floor before the log transform (default 0.005)");
}

void add_pipeline_flags(CLI::App* app, PipelineFlags& f, bool multi_subcase) {
    add_shore_flags(app, f);
    if (multi_subcase)
        app->add_option("--subcase", f.subcases, "Subcase; repeat to compare several");
    else
        app->add_option("--subcase", f.subcase, "opt-shore-to-sh, unopt-shore-to-shore or opt-shore-to-shore");
    app->add_option("--withhold-b", f.withhold_b, "Shell removed from the input fit and scored as a reconstruction target")
        ->expected(0, 1)
        ->default_str("6000");
    app->add_option("--k-folds,--train-folds", f.k_folds, "Inner training folds (default 5)");
    app->add_option("--batch-size", f.batch_size, "Mini-batch size (default 1000)");
    app->add_option("--epochs", f.epochs, "Training epochs (default 200)");
    app->add_option("--learning-rate", f.learning_rate, "RMSProp step size (default 1e-3)");
    app->add_option("--seed", f.seed, "Seed for initialization, shuffling and fold assignment");
    app->add_option("--zeta0", f.zeta0, "Starting or fixed zeta (default median(b)/8)");
    app->add_option("--zeta-subsample", f.zeta_subsample, "Voxels used for zeta optimization (0 = all)");
    app->add_flag("--flat", f.flat, "Train one model on all training rows instead of the inner-fold ensemble");
}

void apply_flags(json& j, const PipelineFlags& f) {
    if (f.subcase) j["subcase"] = *f.subcase;
    if (f.withhold_b) j["withhold_b"] = *f.withhold_b;
    if (!f.shells.empty()) j["shells"] = f.shells;
    if (f.radial_order) j["radial_order"] = *f.radial_order;
    if (f.lambda_n) j["lambda_n"] = *f.lambda_n;
    if (f.lambda_l) j["lambda_l"] = *f.lambda_l;
    if (f.nonneg_epsilon) j["nonneg_epsilon"] = *f.nonneg_epsilon;
    if (f.k_folds) j["k_folds"] = *f.k_folds;
    if (f.batch_size) j["batch_size"] = *f.batch_size;
    if (f.epochs) j["epochs"] = *f.epochs;
    if (f.learning_rate) j["learning_rate"] = *f.learning_rate;
    if (f.seed) {
        j["train_seed"] = *f.seed;
        j["split_seed"] = *f.seed;
    }
    if (f.zeta0) j["zeta0"] = *f.zeta0;
    if (f.zeta_subsample) j["zeta_subsample"] = *f.zeta_subsample;
    if (f.eval_folds) j["eval_folds"] = *f.eval_folds;
    if (f.max_eval_folds) j["max_eval_folds"] = *f.max_eval_folds;
    if (f.flat) j["nested"] = false;
}

json load_config(const std::optional<std::string>& path) {
    if (!path) return json::object();
    std::ifstream in(*path);
    if (!in) throw InvalidArgument("cannot open config file: " + *path);
    try {
        json j = json::parse(in);
        if (!j.is_object()) throw InvalidArgument("config file must hold a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw InvalidArgument(std::string("config file is not valid JSON: ") + e.what());
    }
}

PipelineConfig resolve_config(const std::optional<std::string>& config_path, const PipelineFlags& flags) {
    json j = load_config(config_path);
    apply_flags(j, flags);
    PipelineConfig cfg = PipelineConfig::from_json(j);
    if (cfg.shore.radial_order < 0 || cfg.shore.radial_order % 2) throw InvalidArgument("--radial-order must be even");
    if (!(cfg.nonneg.epsilon > 0.0)) throw InvalidArgument("--nonneg-epsilon must be positive");
    if (cfg.train.batch_size < 1) throw InvalidArgument("--batch-size must be positive");
    if (cfg.train.epochs < 1) throw InvalidArgument("--epochs must be positive");
    if (cfg.train.k_folds < 2 && cfg.nested) throw InvalidArgument("--k-folds must be at least 2");
    return cfg;
}

double parse_real(const std::string& text, const std::string& flag) {
    std::string lower = text;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "inf" || lower == "infinity") return std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw InvalidArgument(flag + " expects a number, got '" + text + "'");
    }
}

// ---------------------------------------------------------------------------
// Containers

Container dataset_container(const PhantomDataset& ds, json metadata) {
    Container c;
    c.kind = "dataset";
    metadata["rows"] = ds.rows();
    metadata["sh_order"] = ds.sh_order;
    c.metadata = std::move(metadata);
    Eigen::MatrixXd bvecs(static_cast<Eigen::Index>(ds.samples.size()), 3);
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        bvecs.row(static_cast<Eigen::Index>(i)) = ds.samples.directions()[i].transpose();
    std::vector<double> blocks(ds.block_ids.begin(), ds.block_ids.end());
    c.segments.push_back(Segment::from_vector("bvals", ds.samples.bvalues()));
    c.segments.push_back(Segment::from_matrix("bvecs", bvecs));
    c.segments.push_back(Segment::from_matrix("signals", ds.signals));
    c.segments.push_back(Segment::from_matrix("fods", ds.fods));
    c.segments.push_back(Segment::from_vector("block_ids", blocks));
    return c;
}

PhantomDataset load_dataset(const std::string& path) {
    const Container c = read_container(fs::path(path), "dataset");
    try {
        const Eigen::MatrixXd bvals = c.segment("bvals").to_matrix();
        const Eigen::MatrixXd bvecs = c.segment("bvecs").to_matrix();
        if (bvecs.cols() != 3 || bvecs.rows() != bvals.rows()) throw FormatError("bvals and bvecs disagree");
        std::vector<Vec3> dirs;
        std::vector<double> b;
        for (Eigen::Index i = 0; i < bvecs.rows(); ++i) {
            dirs.emplace_back(bvecs.row(i).transpose());
            b.push_back(bvals(i, 0));
        }
        PhantomDataset ds{QSpaceSamples(std::move(b), DirectionSet::normalized(std::move(dirs))),
                          c.segment("signals").to_matrix(), c.segment("fods").to_matrix(), {},
                          c.metadata.value("sh_order", 8)};
        const Eigen::MatrixXd blocks = c.segment("block_ids").to_matrix();
        for (Eigen::Index i = 0; i < blocks.rows(); ++i) ds.block_ids.push_back(static_cast<int>(blocks(i, 0)));
        if (ds.signals.cols() != static_cast<Eigen::Index>(ds.samples.size()) ||
            ds.fods.rows() != ds.signals.rows() || ds.block_ids.size() != ds.rows() ||
            ds.fods.cols() != static_cast<Eigen::Index>(sh_coeff_count(ds.sh_order)))
            throw FormatError("dataset segments have inconsistent shapes");
        return ds;
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("invalid dataset: ") + e.what());
    }
}

std::string layer_name(std::size_t model, std::size_t layer, char what) {
    return "model" + std::to_string(model) + "." + what + std::to_string(layer);
}

Container model_container(const TrainedPipeline& p, const PipelineConfig& cfg) {
    Container c;
    c.kind = "model";
    json& m = c.metadata;
    m["subcase"] = to_string(p.subcase);
    m["input_shells"] = p.input_shells;
    m["zeta"] = p.zeta;
    m["radial_order"] = p.shore.radial_order;
    m["lambda_n"] = p.shore.lambda_n;
    m["lambda_l"] = p.shore.lambda_l;
    m["nonneg_epsilon"] = p.nonneg.epsilon;
    m["fod_directions"] = p.fod_directions;
    m["fod_dirs_seed"] = p.fod_dirs_seed;
    m["fod_dirs_iterations"] = p.fod_dirs_iterations;
    m["sh_order"] = p.fod_sh_order;
    m["models"] = p.models.size();
    m["input_dim"] = p.models.front().input_dim;
    m["output_dim"] = p.models.front().output_dim;
    json seeds = json::array();
    for (const auto& model : p.models) seeds.push_back(model.seed);
    m["model_seeds"] = seeds;
    m["final_losses"] = p.final_losses;
    m["config"] = cfg.to_json();
    c.segments.push_back(Segment::from_matrix("input_mean", p.input_norm.mean));
    c.segments.push_back(Segment::from_matrix("input_scale", p.input_norm.scale));
    c.segments.push_back(Segment::from_matrix("target_mean", p.target_norm.mean));
    c.segments.push_back(Segment::from_matrix("target_scale", p.target_norm.scale));
    for (std::size_t i = 0; i < p.models.size(); ++i) {
        for (std::size_t l = 0; l < kLayerCount; ++l) {
            c.segments.push_back(Segment::from_matrix(layer_name(i, l, 'W'), p.models[i].layers[l].weight));
            c.segments.push_back(Segment::from_matrix(layer_name(i, l, 'b'), p.models[i].layers[l].bias));
        }
    }
    return c;
}

TrainedPipeline load_model(const std::string& path) {
    const Container c = read_container(fs::path(path), "model");
    const json& m = c.metadata;
    try {
        TrainedPipeline p;
        p.subcase = parse_subcase(m.at("subcase").get<std::string>());
        p.input_shells = m.at("input_shells").get<std::vector<double>>();
        p.zeta = m.at("zeta").get<double>();
        p.shore = {m.at("radial_order").get<int>(), m.at("lambda_n").get<double>(), m.at("lambda_l").get<double>()};
        p.nonneg.epsilon = m.at("nonneg_epsilon").get<double>();
        p.fod_directions = m.at("fod_directions").get<std::size_t>();
        p.fod_dirs_seed = m.at("fod_dirs_seed").get<std::uint64_t>();
        p.fod_dirs_iterations = m.at("fod_dirs_iterations").get<int>();
        p.fod_sh_order = m.at("sh_order").get<int>();
        p.final_losses = m.at("final_losses").get<std::vector<double>>();
        auto row = [&](const std::string& name) { return Eigen::RowVectorXd(c.segment(name).to_matrix().row(0)); };
        p.input_norm = {row("input_mean"), row("input_scale")};
        p.target_norm = {row("target_mean"), row("target_scale")};
        const auto count = m.at("models").get<std::size_t>();
        const auto seeds = m.at("model_seeds").get<std::vector<std::uint64_t>>();
        if (count == 0 || seeds.size() != count) throw FormatError("model container lists no networks");
        for (std::size_t i = 0; i < count; ++i) {
            MlpModel model;
            model.input_dim = m.at("input_dim").get<int>();
            model.output_dim = m.at("output_dim").get<int>();
            model.seed = seeds[i];
            for (std::size_t l = 0; l < kLayerCount; ++l) {
                model.layers[l].weight = c.segment(layer_name(i, l, 'W')).to_matrix();
                model.layers[l].bias = c.segment(layer_name(i, l, 'b')).to_matrix().col(0);
            }
            if (model.layers.front().weight.cols() != model.input_dim ||
                model.layers.back().weight.rows() != model.output_dim)
                throw FormatError("network layer shapes disagree with the header");
            p.models.push_back(std::move(model));
        }
        return p;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed model header: ") + e.what());
    }
}

Container coeffs_container(const std::string& segment, const Eigen::MatrixXd& rows, json metadata) {
    Container c;
    c.kind = "coeffs";
    c.metadata = std::move(metadata);
    c.segments.push_back(Segment::from_matrix(segment, rows));
    return c;
}

// ---------------------------------------------------------------------------
// Reports

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

void emit_report(const std::string& command, json body, const std::optional<std::string>& path, std::ostream& out) {
    json report;
    report["command"] = command;
    for (auto& [k, v] : body.items()) report[k] = std::move(v);
    report["timestamp"] = utc_timestamp();
    const std::string text = report.dump(2) + "\n";
    if (path) {
        std::ofstream f(*path, std::ios::binary);
        if (!f) throw FormatError("cannot open for writing: " + *path);
        f << text;
        if (!f) throw FormatError("failed writing report: " + *path);
    } else {
        out << text;
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path.string());
    f << text;
}

Eigen::MatrixXd columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& cols) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
        out.col(static_cast<Eigen::Index>(c)) = m.col(static_cast<Eigen::Index>(cols[c]));
    return out;
}

std::vector<double> shells_or_all(const std::vector<double>& shells, const QSpaceSamples& samples) {
    return shells.empty() ? samples.distinct_shells() : shells;
}

// ---------------------------------------------------------------------------
// Subcommands

struct PhantomArgs {
    std::optional<int> voxels;
    std::optional<int> rotations;
    std::optional<std::string> snr;
    std::optional<double> kappa;
    std::optional<std::uint64_t> seed;
    std::vector<double> shells;
    std::optional<int> dirs_per_shell;
    std::string out;
    std::optional<std::string> report;
};

int cmd_phantom(const PhantomArgs& a, const json& file_cfg, std::ostream& out) {
    PhantomConfig pc;
    json j = file_cfg;
    if (a.voxels) j["voxels"] = *a.voxels;
    if (a.rotations) j["rotations"] = *a.rotations;
    if (a.snr) j["snr"] = *a.snr;
    if (a.kappa) j["kappa"] = *a.kappa;
    if (a.seed) j["seed"] = *a.seed;
    if (!a.shells.empty()) j["shells"] = a.shells;
    if (a.dirs_per_shell) j["directions_per_shell"] = *a.dirs_per_shell;
    try {
        pc.n_voxels = j.value("voxels", pc.n_voxels);
        pc.rotations_per_voxel = j.value("rotations", pc.rotations_per_voxel);
        if (j.contains("snr"))
            pc.snr = j["snr"].is_string() ? parse_real(j["snr"].get<std::string>(), "--snr") : j["snr"].get<double>();
        pc.kappa = j.value("kappa", pc.kappa);
        pc.seed = j.value("seed", pc.seed);
        pc.shells = j.value("shells", pc.shells);
        pc.directions_per_shell = j.value("directions_per_shell", pc.directions_per_shell);
        pc.axial = j.value("axial", pc.axial);
        pc.radial = j.value("radial", pc.radial);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("invalid phantom config: ") + e.what());
    }
    if (pc.n_voxels < 1) throw InvalidArgument("--voxels must be positive");
    if (pc.rotations_per_voxel < 0) throw InvalidArgument("--rotations must be non-negative");
    if (!(pc.snr > 0.0)) throw InvalidArgument("--snr must be positive");
    if (pc.directions_per_shell < 1) throw InvalidArgument("--dirs-per-shell must be positive");

    const PhantomDataset ds = generate_dataset(pc);
    json resolved;
    resolved["voxels"] = pc.n_voxels;
    resolved["rotations"] = pc.rotations_per_voxel;
    resolved["snr"] = std::isinf(pc.snr) ? json("inf") : json(pc.snr);
    resolved["kappa"] = pc.kappa;
    resolved["seed"] = pc.seed;
    resolved["shells"] = pc.shells;
    resolved["directions_per_shell"] = pc.directions_per_shell;
    resolved["scheme_seed"] = pc.scheme_seed;
    resolved["axial"] = pc.axial;
    resolved["radial"] = pc.radial;
    resolved["max_fibers"] = pc.max_fibers;

    const fs::path path(a.out);
    write_container(path, dataset_container(ds, {{"phantom", resolved}}));
    std::ostringstream bval, bvec;
    write_bval(bval, ds.samples.bvalues());
    write_bvec(bvec, ds.samples.directions());
    write_text(fs::path(path).replace_extension(".bval"), bval.str());
    write_text(fs::path(path).replace_extension(".bvec"), bvec.str());
    if (a.report) emit_report("phantom", {{"config", resolved}, {"rows", ds.rows()}, {"out", a.out}}, a.report, out);
    return 0;
}

struct FitArgs {
    std::string in;
    std::string out;
    std::optional<double> zeta;
    bool log = false;
    std::optional<std::string> report;
};

int cmd_fit_shore(const FitArgs& a, const PipelineFlags& f, const json& file_cfg, std::ostream& out) {
    const PhantomDataset ds = load_dataset(a.in);
    json j = file_cfg;
    apply_flags(j, f);
    const PipelineConfig cfg = PipelineConfig::from_json(j);
    const ShoreFitConfig& sc = cfg.shore;
    const auto shells = shells_or_all(f.shells, ds.samples);
    const auto cols = ds.samples.select_shells(shells);
    if (cols.empty()) throw InvalidArgument("shell mask selects zero samples");
    const QSpaceSamples sub = ds.samples.subset(cols);
    const double zeta = a.zeta ? *a.zeta : j.value("zeta", default_zeta0(sub));
    Eigen::MatrixXd signals = columns(ds.signals, cols);
    if (a.log) signals = clamp_log(signals, cfg.nonneg);
    const Eigen::MatrixXd coeffs = ShoreFitter(sub, sc, zeta).fit_rows(signals);
    json meta{{"representation", "shore"}, {"zeta", zeta},      {"radial_order", sc.radial_order},
              {"lambda_n", sc.lambda_n},   {"lambda_l", sc.lambda_l}, {"shells", shells},
              {"log", a.log},              {"source", a.in}};
    write_container(fs::path(a.out), coeffs_container("coeffs", coeffs, meta));
    if (a.report) emit_report("fit-shore", {{"config", meta}, {"rows", coeffs.rows()}}, a.report, out);
    return 0;
}

struct ZetaArgs {
    std::string in;
    bool log = false;
    std::optional<std::string> report;
};

int cmd_optimize_zeta(const ZetaArgs& a, const PipelineFlags& f, const json& file_cfg, std::ostream& out) {
    const PhantomDataset ds = load_dataset(a.in);
    json j = file_cfg;
    apply_flags(j, f);
    const PipelineConfig cfg = PipelineConfig::from_json(j);
    const auto shells = shells_or_all(f.shells.empty() ? cfg.shells : f.shells, ds.samples);
    const auto cols = ds.samples.select_shells(shells);
    if (cols.empty()) throw InvalidArgument("shell mask selects zero samples");
    const QSpaceSamples sub = ds.samples.subset(cols);
    Eigen::MatrixXd signals = columns(ds.signals, cols);
    if (cfg.zeta_subsample > 0 && cfg.zeta_subsample < static_cast<std::size_t>(signals.rows())) {
        Eigen::MatrixXd picked(static_cast<Eigen::Index>(cfg.zeta_subsample), signals.cols());
        const double stride = static_cast<double>(signals.rows()) / static_cast<double>(cfg.zeta_subsample);
        for (Eigen::Index i = 0; i < picked.rows(); ++i)
            picked.row(i) = signals.row(static_cast<Eigen::Index>(static_cast<double>(i) * stride));
        signals = std::move(picked);
    }
    if (a.log) signals = clamp_log(signals, cfg.nonneg);
    const double zeta0 = cfg.zeta0 > 0.0 ? cfg.zeta0 : default_zeta0(sub);
    const ZetaResult r = optimize_zeta(signals, sub, cfg.shore, zeta0, cfg.zeta_opt);
    json config = cfg.to_json();
    config["shells"] = shells;
    config["zeta0"] = zeta0;
    config["log"] = a.log;
    emit_report("optimize-zeta",
                {{"config", config},
                 {"zeta", r.zeta},
                 {"objective", r.objective},
                 {"initial_objective", r.initial_objective},
                 {"iterations", r.iterations},
                 {"zeta_history", r.zeta_history}},
                a.report, out);
    return 0;
}

struct FodArgs {
    std::string in;
    std::string out;
    std::optional<double> zeta;
    bool log = false;
    std::optional<std::string> report;
};

int cmd_fod_to_shore(const FodArgs& a, const PipelineFlags& f, const json& file_cfg, std::ostream& out) {
    const PhantomDataset ds = load_dataset(a.in);
    json j = file_cfg;
    apply_flags(j, f);
    const PipelineConfig cfg = PipelineConfig::from_json(j);
    const double zeta = a.zeta ? *a.zeta : j.value("zeta", 0.0);
    if (!(zeta > 0.0)) throw InvalidArgument("--zeta is required and must be positive");
    const DirectionSet dirs = fod_directions(cfg);
    Eigen::MatrixXd coeffs;
    if (a.log) {
        coeffs = encode_targets(ds.fods, ds.sh_order, Subcase::OptShoreToShore, dirs, zeta, cfg.shore, cfg.nonneg);
    } else {
        const Eigen::MatrixXd values = ds.fods * eval_sh_basis(dirs, ds.sh_order).transpose();
        coeffs = ShoreFitter(QSpaceSamples(std::vector<double>(dirs.size(), kFodShellB), dirs), cfg.shore, zeta)
                     .fit_rows(values);
    }
    json meta{{"representation", "shore-fod"}, {"zeta", zeta},       {"radial_order", cfg.shore.radial_order},
              {"lambda_n", cfg.shore.lambda_n}, {"lambda_l", cfg.shore.lambda_l}, {"b", kFodShellB},
              {"fod_directions", cfg.fod_directions}, {"fod_dirs_seed", cfg.fod_dirs_seed}, {"log", a.log},
              {"source", a.in}};
    write_container(fs::path(a.out), coeffs_container("coeffs", coeffs, meta));
    if (a.report) emit_report("fod-to-shore", {{"config", meta}, {"rows", coeffs.rows()}}, a.report, out);
    return 0;
}

struct TrainArgs {
    std::string in;
    std::string out;
    std::optional<std::string> report;
};

int cmd_train(const TrainArgs& a, const PipelineConfig& cfg, std::ostream& out) {
    const PhantomDataset ds = load_dataset(a.in);
    std::vector<std::size_t> rows(ds.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const TrainedPipeline p = fit_pipeline(cfg, ds, rows);
    write_container(fs::path(a.out), model_container(p, cfg));
    if (a.report)
        emit_report("train",
                    {{"config", cfg.to_json()},
                     {"seeds", {{"train_seed", cfg.train.seed}, {"split_seed", cfg.split_seed}}},
                     {"zeta", p.zeta},
                     {"models", p.models.size()},
                     {"final_losses", p.final_losses}},
                    a.report, out);
    return 0;
}

struct PredictArgs {
    std::string model;
    std::string in;
    std::string out;
};

int cmd_predict(const PredictArgs& a) {
    const TrainedPipeline p = load_model(a.model);
    const PhantomDataset ds = load_dataset(a.in);
    const Eigen::MatrixXd fods = predict_fods(p, ds.signals, ds.samples);
    json meta{{"representation", "sh-fod"}, {"sh_order", p.fod_sh_order}, {"subcase", to_string(p.subcase)},
              {"zeta", p.zeta},             {"model", a.model},            {"source", a.in}};
    write_container(fs::path(a.out), coeffs_container("fod", fods, meta));
    return 0;
}

json comparisons_json(const std::vector<std::string>& labels, const std::vector<std::vector<double>>& accs) {
    std::vector<double> raw;
    json entries = json::array();
    for (std::size_t i = 0; i < accs.size(); ++i) {
        for (std::size_t k = i + 1; k < accs.size(); ++k) {
            std::vector<double> x, y;
            for (std::size_t r = 0; r < accs[i].size(); ++r) {
                if (std::isfinite(accs[i][r]) && std::isfinite(accs[k][r])) {
                    x.push_back(accs[i][r]);
                    y.push_back(accs[k][r]);
                }
            }
            const auto t = wilcoxon_signed_rank(x, y);
            raw.push_back(t.p);
            entries.push_back(
                {{"a", labels[i]}, {"b", labels[k]}, {"statistic", t.statistic}, {"n", t.n}, {"exact", t.exact}, {"p", t.p}});
        }
    }
    if (!raw.empty()) {
        const auto corrected = bonferroni(raw);
        for (std::size_t i = 0; i < corrected.size(); ++i) entries[i]["p_bonferroni"] = corrected[i];
    }
    return entries;
}

json acc_summary(const std::vector<double>& acc) {
    std::vector<double> finite;
    std::copy_if(acc.begin(), acc.end(), std::back_inserter(finite), [](double v) { return std::isfinite(v); });
    json j;
    j["acc"] = acc;
    j["undefined"] = acc.size() - finite.size();
    if (finite.empty()) {
        j["median"] = nullptr;
        j["mean"] = nullptr;
    } else {
        const Summary s = summarize_report(finite);
        j["median"] = s.median;
        j["mean"] = s.mean;
    }
    return j;
}

struct EvaluateArgs {
    std::string in;
    std::vector<std::string> pred;
    std::vector<std::string> labels;
    std::optional<std::string> report;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
    if (!a.labels.empty() && a.labels.size() != a.pred.size())
        throw InvalidArgument("--label must be given once per --pred");
    const PhantomDataset ds = load_dataset(a.in);
    std::vector<std::vector<double>> accs;
    json methods = json::array();
    std::vector<std::string> labels = a.labels.empty() ? a.pred : a.labels;
    for (std::size_t i = 0; i < a.pred.size(); ++i) {
        const Container c = read_container(fs::path(a.pred[i]), "coeffs");
        if (!c.has_segment("fod")) throw FormatError("prediction container holds no 'fod' segment: " + a.pred[i]);
        const Eigen::MatrixXd pred = c.segment("fod").to_matrix();
        if (pred.rows() != ds.fods.rows() || pred.cols() != ds.fods.cols())
            throw FormatError("prediction shape does not match the dataset: " + a.pred[i]);
        accs.push_back(acc_rows(pred, ds.fods, ds.sh_order));
        json m = acc_summary(accs.back());
        m["label"] = labels[i];
        m["path"] = a.pred[i];
        methods.push_back(std::move(m));
    }
    emit_report("evaluate",
                {{"config", {{"in", a.in}, {"pred", a.pred}, {"labels", labels}}},
                 {"methods", methods},
                 {"comparisons", comparisons_json(labels, accs)}},
                a.report, out);
    return 0;
}

struct CrossvalArgs {
    std::string in;
    std::optional<std::string> report;
};

int cmd_crossval(const CrossvalArgs& a, const PipelineFlags& f, const std::optional<std::string>& config_path,
                 std::ostream& out) {
    const PhantomDataset ds = load_dataset(a.in);
    std::vector<std::string> names = f.subcases;
    if (names.empty()) {
        const json j = load_config(config_path);
        names.push_back(j.value("subcase", to_string(Subcase::OptShoreToShore)));
    }
    std::vector<EvalReport> reports;
    json subcases = json::array();
    json first_config;
    for (const auto& name : names) {
        PipelineFlags one = f;
        one.subcase = name;
        const PipelineConfig cfg = resolve_config(config_path, one);
        reports.push_back(run_subcase_experiment(cfg, ds));
        subcases.push_back(reports.back().to_json());
        if (first_config.is_null()) first_config = cfg.to_json();
    }
    json body;
    body["config"] = first_config;
    body["seeds"] = {{"train_seed", first_config["train_seed"]}, {"split_seed", first_config["split_seed"]}};
    body["dataset"] = a.in;
    body["subcases"] = subcases;
    body["comparisons"] = reports.size() > 1 ? compare_reports(reports) : json::array();
    emit_report("crossval", body, a.report, out);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Deep SHORE pipeline: phantom generation, SHORE fitting, training and evaluation", "deepshore"};
    app.require_subcommand(1);
    std::optional<std::string> config_path;
    app.add_option("--config", config_path, "JSON config; command-line flags override its keys");

    PipelineFlags flags;
    PhantomArgs phantom;
    auto* phantom_cmd = app.add_subcommand("phantom", "Generate a multi-tensor phantom dataset");
    phantom_cmd->add_option("--voxels", phantom.voxels, "Base voxels (blocks)");
    phantom_cmd->add_option("--rotations", phantom.rotations, "Rotated copies per base voxel (default 100)");
    phantom_cmd->add_option("--snr", phantom.snr, "Rician SNR, or 'inf' for noiseless (default 30)");
    phantom_cmd->add_option("--kappa", phantom.kappa, "Watson concentration of the ground-truth FOD (default 20)");
    phantom_cmd->add_option("--seed", phantom.seed, "Phantom seed");
    phantom_cmd->add_option("--shells", phantom.shells, "b-values (default 3000 6000 9000 12000)");
    phantom_cmd->add_option("--dirs-per-shell", phantom.dirs_per_shell, "Directions per shell (default 25)");
    phantom_cmd->add_option("--out", phantom.out, "Dataset container; .bval/.bvec are written alongside")->required();
    phantom_cmd->add_option("--report", phantom.report, "JSON report path");

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit-shore", "Fit SHORE coefficients to every voxel");
    fit_cmd->add_option("--in", fit.in, "Dataset container")->required();
    fit_cmd->add_option("--out", fit.out, "Coefficient container")->required();
    fit_cmd->add_option("--zeta", fit.zeta, "Scale parameter (default median(b)/8)");
    fit_cmd->add_flag("--log", fit.log, "Fit log-transformed signals");
    fit_cmd->add_option("--report", fit.report, "JSON report path");
    add_shore_flags(fit_cmd, flags);

    ZetaArgs zeta;
    auto* zeta_cmd = app.add_subcommand("optimize-zeta", "Optimize the SHORE scale parameter");
    zeta_cmd->add_option("--in", zeta.in, "Dataset container")->required();
    zeta_cmd->add_option("--zeta0", flags.zeta0, "Starting zeta (default median(b)/8)");
    zeta_cmd->add_option("--zeta-subsample", flags.zeta_subsample, "Voxels used (0 = all)");
    zeta_cmd->add_flag("--log", zeta.log, "Optimize on log-transformed signals");
    zeta_cmd->add_option("--report", zeta.report, "JSON report path (default stdout)");
    add_shore_flags(zeta_cmd, flags);

    FodArgs fod;
    auto* fod_cmd = app.add_subcommand("fod-to-shore", "Represent ground-truth FODs in SHORE at b = 2000");
    fod_cmd->add_option("--in", fod.in, "Dataset container")->required();
    fod_cmd->add_option("--out", fod.out, "Coefficient container")->required();
    fod_cmd->add_option("--zeta", fod.zeta, "Scale parameter")->required();
    fod_cmd->add_flag("--log", fod.log, "Fit the clamped log of the FOD samples");
    fod_cmd->add_option("--report", fod.report, "JSON report path");
    add_shore_flags(fod_cmd, flags);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train a subcase model on every row of a dataset");
    train_cmd->add_option("--in", train_args.in, "Dataset container")->required();
    train_cmd->add_option("--out", train_args.out, "Model container")->required();
    train_cmd->add_option("--report", train_args.report, "JSON report path");
    add_pipeline_flags(train_cmd, flags, false);

    PredictArgs predict_args;
    auto* predict_cmd = app.add_subcommand("predict", "Predict SH FODs with a trained model");
    predict_cmd->add_option("--model", predict_args.model, "Model container")->required();
    predict_cmd->add_option("--in", predict_args.in, "Dataset container")->required();
    predict_cmd->add_option("--out", predict_args.out, "Coefficient container of SH FODs")->required();

    EvaluateArgs eval_args;
    auto* eval_cmd = app.add_subcommand("evaluate", "Score predicted FODs against ground truth by ACC");
    eval_cmd->add_option("--in", eval_args.in, "Dataset container holding the ground truth")->required();
    eval_cmd->add_option("--pred", eval_args.pred, "Prediction container; repeat to compare methods")->required();
    eval_cmd->add_option("--label", eval_args.labels, "Method label per --pred");
    eval_cmd->add_option("--report", eval_args.report, "JSON report path (default stdout)");

    CrossvalArgs cv;
    auto* cv_cmd = app.add_subcommand("crossval", "Block-aware cross-validated subcase experiment");
    cv_cmd->add_option("--in", cv.in, "Dataset container")->required();
    cv_cmd->add_option("--report", cv.report, "JSON report path (default stdout)");
    cv_cmd->add_option("--eval-folds", flags.eval_folds, "Outer test folds (default 8)");
    cv_cmd->add_option("--max-eval-folds", flags.max_eval_folds, "Run only the first N outer folds (0 = all)");
    add_pipeline_flags(cv_cmd, flags, true);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 1;
    }

    try {
        const json file_cfg = load_config(config_path);
        if (*phantom_cmd) return cmd_phantom(phantom, file_cfg, out);
        if (*fit_cmd) return cmd_fit_shore(fit, flags, file_cfg, out);
        if (*zeta_cmd) return cmd_optimize_zeta(zeta, flags, file_cfg, out);
        if (*fod_cmd) return cmd_fod_to_shore(fod, flags, file_cfg, out);
        if (*train_cmd) return cmd_train(train_args, resolve_config(config_path, flags), out);
        if (*predict_cmd) return cmd_predict(predict_args);
        if (*eval_cmd) return cmd_evaluate(eval_args, out);
        if (*cv_cmd) return cmd_crossval(cv, flags, config_path, out);
    } catch (const InvalidArgument& e) {
        err << "deepshore: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        err << "deepshore: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "deepshore: " << e.what() << "\n";
        return 2;
    }
    err << "deepshore: no subcommand given\n";
    return 1;
}

}  // namespace deepshore
