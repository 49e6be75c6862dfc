#include "deepshore/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "deepshore/error.hpp"

namespace deepshore {

std::string to_string(Subcase s) {
    switch (s) {
        case Subcase::OptShoreToSh: return "opt-shore-to-sh";
        case Subcase::UnoptShoreToShore: return "unopt-shore-to-shore";
        case Subcase::OptShoreToShore: return "opt-shore-to-shore";
    }
    return "unknown";
}

Subcase parse_subcase(const std::string& name) {
    for (Subcase s : {Subcase::OptShoreToSh, Subcase::UnoptShoreToShore, Subcase::OptShoreToShore})
        if (name == to_string(s)) return s;
    throw InvalidArgument("unknown subcase: " + name);
}

bool optimizes_zeta(Subcase s) { return s != Subcase::UnoptShoreToShore; }
bool shore_target(Subcase s) { return s != Subcase::OptShoreToSh; }

nlohmann::json PipelineConfig::to_json() const {
    nlohmann::json j;
    j["subcase"] = to_string(subcase);
    j["shells"] = shells;
    j["withhold_b"] = withhold_b ? nlohmann::json(*withhold_b) : nlohmann::json(nullptr);
    j["radial_order"] = shore.radial_order;
    j["lambda_n"] = shore.lambda_n;
    j["lambda_l"] = shore.lambda_l;
    j["nonneg_epsilon"] = nonneg.epsilon;
    j["batch_size"] = train.batch_size;
    j["epochs"] = train.epochs;
    j["rho"] = train.rho;
    j["learning_rate"] = train.learning_rate;
    j["rms_epsilon"] = train.epsilon;
    j["train_seed"] = train.seed;
    j["k_folds"] = train.k_folds;
    j["early_stop_patience"] = train.early_stop_patience;
    j["zeta0"] = zeta0;
    j["zeta_subsample"] = zeta_subsample;
    j["zeta_max_iterations"] = zeta_opt.max_iterations;
    j["zeta_tolerance"] = zeta_opt.tolerance;
    j["zeta_gradient_step"] = zeta_opt.gradient_step;
    j["zeta_max_log_excursion"] = zeta_opt.max_log_excursion;
    j["fod_directions"] = fod_directions;
    j["fod_dirs_seed"] = fod_dirs_seed;
    j["fod_dirs_iterations"] = fod_dirs_iterations;
    j["fod_sh_order"] = fod_sh_order;
    j["eval_folds"] = eval_folds;
    j["max_eval_folds"] = max_eval_folds;
    j["nested"] = nested;
    j["split_seed"] = split_seed;
    j["standardize"] = standardize;
    return j;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    PipelineConfig c;
    try {
        if (j.contains("subcase")) c.subcase = parse_subcase(j["subcase"].get<std::string>());
        c.shells = j.value("shells", c.shells);
        if (j.contains("withhold_b") && !j["withhold_b"].is_null()) c.withhold_b = j["withhold_b"].get<double>();
        c.shore.radial_order = j.value("radial_order", c.shore.radial_order);
        c.shore.lambda_n = j.value("lambda_n", c.shore.lambda_n);
        c.shore.lambda_l = j.value("lambda_l", c.shore.lambda_l);
        c.nonneg.epsilon = j.value("nonneg_epsilon", c.nonneg.epsilon);
        c.train.batch_size = j.value("batch_size", c.train.batch_size);
        c.train.epochs = j.value("epochs", c.train.epochs);
        c.train.rho = j.value("rho", c.train.rho);
        c.train.learning_rate = j.value("learning_rate", c.train.learning_rate);
        c.train.epsilon = j.value("rms_epsilon", c.train.epsilon);
        c.train.seed = j.value("train_seed", c.train.seed);
        c.train.k_folds = j.value("k_folds", c.train.k_folds);
        c.train.early_stop_patience = j.value("early_stop_patience", c.train.early_stop_patience);
        c.zeta0 = j.value("zeta0", c.zeta0);
        c.zeta_subsample = j.value("zeta_subsample", c.zeta_subsample);
        c.zeta_opt.max_iterations = j.value("zeta_max_iterations", c.zeta_opt.max_iterations);
        c.zeta_opt.tolerance = j.value("zeta_tolerance", c.zeta_opt.tolerance);
        c.zeta_opt.gradient_step = j.value("zeta_gradient_step", c.zeta_opt.gradient_step);
        c.zeta_opt.max_log_excursion = j.value("zeta_max_log_excursion", c.zeta_opt.max_log_excursion);
        c.fod_directions = j.value("fod_directions", c.fod_directions);
        c.fod_dirs_seed = j.value("fod_dirs_seed", c.fod_dirs_seed);
        c.fod_dirs_iterations = j.value("fod_dirs_iterations", c.fod_dirs_iterations);
        c.fod_sh_order = j.value("fod_sh_order", c.fod_sh_order);
        c.eval_folds = j.value("eval_folds", c.eval_folds);
        c.max_eval_folds = j.value("max_eval_folds", c.max_eval_folds);
        c.nested = j.value("nested", c.nested);
        c.split_seed = j.value("split_seed", c.split_seed);
        c.standardize = j.value("standardize", c.standardize);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("invalid pipeline config: ") + e.what());
    }
    return c;
}

DirectionSet fod_directions(const PipelineConfig& cfg) {
    return generate_uniform_directions(cfg.fod_directions, cfg.fod_dirs_seed, cfg.fod_dirs_iterations);
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& rows) {
    if (rows.rows() == 0) throw InvalidArgument("cannot fit a normalizer on zero rows");
    Standardizer s;
    s.mean = rows.colwise().mean();
    const Eigen::MatrixXd centered = rows.rowwise() - s.mean;
    s.scale = (centered.colwise().squaredNorm() / static_cast<double>(rows.rows())).cwiseSqrt();
    for (Eigen::Index c = 0; c < s.scale.size(); ++c)
        if (!(s.scale[c] > 1e-12 * std::max(1.0, std::abs(s.mean[c])))) s.scale[c] = 1.0;
    return s;
}

Standardizer Standardizer::identity(Eigen::Index cols) {
    return {Eigen::RowVectorXd::Zero(cols), Eigen::RowVectorXd::Ones(cols)};
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& rows) const {
    return (rows.rowwise() - mean).array().rowwise() / scale.array();
}

Eigen::MatrixXd Standardizer::invert(const Eigen::MatrixXd& rows) const {
    return (rows.array().rowwise() * scale.array()).matrix().rowwise() + mean;
}

namespace {

std::vector<double> resolve_shells(const PipelineConfig& cfg, const QSpaceSamples& samples) {
    std::vector<double> shells = cfg.shells.empty() ? samples.distinct_shells() : cfg.shells;
    if (cfg.withhold_b) {
        const double w = *cfg.withhold_b;
        std::erase_if(shells, [w](double b) { return std::abs(b - w) <= 1.0; });
    }
    if (shells.empty()) throw InvalidArgument("shell mask selects no shells");
    return shells;
}

QSpaceSamples masked_samples(const QSpaceSamples& samples, const std::vector<double>& shells,
                             std::vector<std::size_t>* columns = nullptr) {
    const auto idx = samples.select_shells(shells);
    if (idx.empty()) throw InvalidArgument("shell mask selects zero samples");
    if (columns) *columns = idx;
    return samples.subset(idx);
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& cols) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(static_cast<Eigen::Index>(cols[c]));
    return out;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
    return out;
}

// Log-space sphere basis for the FOD representation (rows = dirs).
Eigen::MatrixXd fod_basis(Subcase subcase, const DirectionSet& dirs, double zeta, const ShoreFitConfig& shore,
                          int sh_order) {
    if (shore_target(subcase))
        return shore_design_matrix(QSpaceSamples(std::vector<double>(dirs.size(), kFodShellB), dirs),
                                   shore.radial_order, zeta);
    return eval_sh_basis(dirs, sh_order);
}

}  // namespace

Eigen::MatrixXd encode_inputs(const Eigen::MatrixXd& signals, const QSpaceSamples& samples,
                              const std::vector<double>& shells, double zeta, const ShoreFitConfig& shore,
                              const NonNegConfig& nonneg) {
    if (signals.cols() != static_cast<Eigen::Index>(samples.size()))
        throw InvalidArgument("signal width does not match the acquisition scheme");
    std::vector<std::size_t> cols;
    const QSpaceSamples sub = masked_samples(samples, shells, &cols);
    return ShoreFitter(sub, shore, zeta).fit_rows(clamp_log(select_columns(signals, cols), nonneg));
}

Eigen::MatrixXd encode_targets(const Eigen::MatrixXd& fods, int sh_order, Subcase subcase, const DirectionSet& dirs,
                               double zeta, const ShoreFitConfig& shore, const NonNegConfig& nonneg) {
    const Eigen::MatrixXd samples = fods * eval_sh_basis(dirs, sh_order).transpose();
    const Eigen::MatrixXd logs = clamp_log(samples, nonneg);
    if (shore_target(subcase))
        return ShoreFitter(QSpaceSamples(std::vector<double>(dirs.size(), kFodShellB), dirs), shore, zeta)
            .fit_rows(logs);
    return ShFitter(dirs, sh_order).fit_rows(logs);
}

Eigen::MatrixXd decode_to_amplitudes(const Eigen::MatrixXd& coeffs, Subcase subcase, const DirectionSet& dirs,
                                     double zeta, const ShoreFitConfig& shore, int sh_order) {
    const Eigen::MatrixXd basis = fod_basis(subcase, dirs, zeta, shore, sh_order);
    if (coeffs.cols() != basis.cols()) throw InvalidArgument("coefficient width does not match the FOD representation");
    return exp_restore(Eigen::MatrixXd(coeffs * basis.transpose()));
}

Eigen::MatrixXd decode_predictions(const Eigen::MatrixXd& coeffs, Subcase subcase, const DirectionSet& dirs,
                                   double zeta, const ShoreFitConfig& shore, int sh_order) {
    return ShFitter(dirs, sh_order).fit_rows(decode_to_amplitudes(coeffs, subcase, dirs, zeta, shore, sh_order));
}

ZetaResult choose_zeta(const PipelineConfig& cfg, const PhantomDataset& data, const std::vector<std::size_t>& rows) {
    const auto shells = resolve_shells(cfg, data.samples);
    std::vector<std::size_t> cols;
    const QSpaceSamples sub = masked_samples(data.samples, shells, &cols);
    const double zeta0 = cfg.zeta0 > 0.0 ? cfg.zeta0 : default_zeta0(sub);
    if (!optimizes_zeta(cfg.subcase)) return {zeta0, 0.0, 0.0, 0, {zeta0}};

    std::vector<std::size_t> use = rows;
    if (cfg.zeta_subsample > 0 && cfg.zeta_subsample < use.size()) {
        // Evenly strided subset keeps the choice deterministic.
        std::vector<std::size_t> picked;
        const double stride = static_cast<double>(use.size()) / static_cast<double>(cfg.zeta_subsample);
        for (std::size_t i = 0; i < cfg.zeta_subsample; ++i)
            picked.push_back(use[static_cast<std::size_t>(static_cast<double>(i) * stride)]);
        use = std::move(picked);
    }
    return optimize_zeta(select_columns(select_rows(data.signals, use), cols), sub, cfg.shore, zeta0, cfg.zeta_opt);
}

TrainedPipeline fit_pipeline(const PipelineConfig& cfg, const PhantomDataset& data,
                             const std::vector<std::size_t>& train_rows) {
    if (train_rows.empty()) throw InvalidArgument("no training rows");
    TrainedPipeline p;
    p.subcase = cfg.subcase;
    p.input_shells = resolve_shells(cfg, data.samples);
    p.shore = cfg.shore;
    p.nonneg = cfg.nonneg;
    p.fod_directions = cfg.fod_directions;
    p.fod_dirs_seed = cfg.fod_dirs_seed;
    p.fod_dirs_iterations = cfg.fod_dirs_iterations;
    p.fod_sh_order = cfg.fod_sh_order;
    p.zeta = choose_zeta(cfg, data, train_rows).zeta;

    const DirectionSet dirs = fod_directions(cfg);
    const Eigen::MatrixXd x =
        encode_inputs(select_rows(data.signals, train_rows), data.samples, p.input_shells, p.zeta, p.shore, p.nonneg);
    const Eigen::MatrixXd t = encode_targets(select_rows(data.fods, train_rows), data.sh_order, p.subcase, dirs, p.zeta,
                                             p.shore, p.nonneg);
    p.input_norm = cfg.standardize ? Standardizer::fit(x) : Standardizer::identity(x.cols());
    p.target_norm = cfg.standardize ? Standardizer::fit(t) : Standardizer::identity(t.cols());

    VoxelDataset all;
    all.inputs = p.input_norm.apply(x);
    all.targets = p.target_norm.apply(t);
    for (std::size_t r : train_rows) all.block_ids.push_back(data.block_ids[r]);

    const auto in_dim = static_cast<int>(x.cols());
    const auto out_dim = static_cast<int>(t.cols());
    if (cfg.nested) {
        const auto inner = kfold_split(all.block_ids, cfg.train.k_folds, derive_seed(cfg.split_seed, 0x1a2b));
        for (std::size_t j = 0; j < inner.size(); ++j) {
            TrainConfig tc = cfg.train;
            tc.seed = derive_seed(cfg.train.seed, j, 1);
            const VoxelDataset tr = all.select(inner[j].train);
            const VoxelDataset va = all.select(inner[j].test);
            auto result = train(build_model(in_dim, out_dim, derive_seed(cfg.train.seed, j, 2)), tr, tc, &va);
            p.final_losses.push_back(result.loss_history.back());
            p.models.push_back(std::move(result.model));
        }
    } else {
        auto result = train(build_model(in_dim, out_dim, cfg.train.seed), all, cfg.train);
        p.final_losses.push_back(result.loss_history.back());
        p.models.push_back(std::move(result.model));
    }
    return p;
}

Eigen::MatrixXd predict_coefficients(const TrainedPipeline& p, const Eigen::MatrixXd& signals,
                                     const QSpaceSamples& samples) {
    if (p.models.empty()) throw InvalidArgument("pipeline has no trained model");
    const Eigen::MatrixXd x = p.input_norm.apply(encode_inputs(signals, samples, p.input_shells, p.zeta, p.shore, p.nonneg));
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(x.rows(), p.models.front().output_dim);
    for (const auto& m : p.models) sum += predict(m, x);
    return p.target_norm.invert(sum / static_cast<double>(p.models.size()));
}

Eigen::MatrixXd predict_fods(const TrainedPipeline& p, const Eigen::MatrixXd& signals, const QSpaceSamples& samples) {
    const DirectionSet dirs = generate_uniform_directions(p.fod_directions, p.fod_dirs_seed, p.fod_dirs_iterations);
    return decode_predictions(predict_coefficients(p, signals, samples), p.subcase, dirs, p.zeta, p.shore,
                              p.fod_sh_order);
}

std::vector<double> acc_rows(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth, int sh_order) {
    if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols())
        throw InvalidArgument("prediction and truth shapes differ");
    std::vector<double> out(static_cast<std::size_t>(predicted.rows()));
    for (Eigen::Index r = 0; r < predicted.rows(); ++r) {
        const Eigen::VectorXd u = predicted.row(r).transpose();
        const Eigen::VectorXd v = truth.row(r).transpose();
        try {
            out[static_cast<std::size_t>(r)] =
                acc(std::span<const double>(u.data(), static_cast<std::size_t>(u.size())),
                    std::span<const double>(v.data(), static_cast<std::size_t>(v.size())), sh_order);
        } catch (const UndefinedCorrelation&) {
            out[static_cast<std::size_t>(r)] = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return out;
}

namespace {

Summary finite_summary(const std::vector<double>& values) {
    std::vector<double> finite;
    std::copy_if(values.begin(), values.end(), std::back_inserter(finite), [](double v) { return std::isfinite(v); });
    if (finite.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    return summarize_report(finite);
}

double withheld_rmse(const PhantomDataset& data, const std::vector<std::size_t>& rows, const TrainedPipeline& p,
                     double withheld_b) {
    const auto held_cols = data.samples.select_shells(std::vector<double>{withheld_b});
    if (held_cols.empty()) throw InvalidArgument("withheld shell is not present in the data");
    const Eigen::MatrixXd signals = select_rows(data.signals, rows);
    std::vector<std::size_t> cols;
    const QSpaceSamples sub = masked_samples(data.samples, p.input_shells, &cols);
    const Eigen::MatrixXd coeffs = ShoreFitter(sub, p.shore, p.zeta).fit_rows(select_columns(signals, cols));
    const Eigen::MatrixXd design = shore_design_matrix(data.samples.subset(held_cols), p.shore.radial_order, p.zeta);
    const Eigen::MatrixXd predicted = coeffs * design.transpose();
    const Eigen::MatrixXd truth = select_columns(signals, held_cols);
    return std::sqrt((predicted - truth).squaredNorm() / truth.squaredNorm());
}

}  // namespace

EvalReport run_subcase_experiment(const PipelineConfig& cfg, const PhantomDataset& data) {
    if (cfg.eval_folds < 2) throw InvalidArgument("at least two evaluation folds are required");
    EvalReport report;
    report.subcase = cfg.subcase;
    report.config = cfg.to_json();
    const DirectionSet dirs = fod_directions(cfg);
    const auto folds = kfold_split(data.block_ids, cfg.eval_folds, cfg.split_seed);
    const int run = cfg.max_eval_folds > 0 ? std::min(cfg.max_eval_folds, cfg.eval_folds) : cfg.eval_folds;

    for (int f = 0; f < run; ++f) {
        const auto& split = folds[static_cast<std::size_t>(f)];
        FoldReport fr;
        fr.fold = f;
        fr.train_rows = split.train.size();
        fr.test_rows = split.test.size();

        const TrainedPipeline p = fit_pipeline(cfg, data, split.train);
        fr.zeta = p.zeta;
        fr.final_losses = p.final_losses;

        // ζ, normalizers and weights above saw only split.train.
        std::set<int> train_blocks, test_blocks;
        for (std::size_t r : split.train) train_blocks.insert(data.block_ids[r]);
        for (std::size_t r : split.test) test_blocks.insert(data.block_ids[r]);
        fr.leakage_free = std::none_of(test_blocks.begin(), test_blocks.end(),
                                       [&](int b) { return train_blocks.count(b) > 0; });

        const Eigen::MatrixXd test_signals = select_rows(data.signals, split.test);
        const Eigen::MatrixXd coeffs = predict_coefficients(p, test_signals, data.samples);
        const Eigen::MatrixXd amplitudes =
            decode_to_amplitudes(coeffs, p.subcase, dirs, p.zeta, p.shore, p.fod_sh_order);
        fr.min_fod_amplitude = amplitudes.minCoeff();
        const Eigen::MatrixXd predicted = ShFitter(dirs, p.fod_sh_order).fit_rows(amplitudes);
        const Eigen::MatrixXd truth = select_rows(data.fods, split.test);
        fr.min_log_target = clamp_log(Eigen::MatrixXd(truth * eval_sh_basis(dirs, data.sh_order).transpose()),
                                      cfg.nonneg).minCoeff();
        fr.acc = acc_rows(predicted, truth, data.sh_order);
        fr.summary = finite_summary(fr.acc);
        if (cfg.withhold_b) fr.withheld_rel_rmse = withheld_rmse(data, split.test, p, *cfg.withhold_b);

        report.acc.insert(report.acc.end(), fr.acc.begin(), fr.acc.end());
        report.rows.insert(report.rows.end(), split.test.begin(), split.test.end());
        report.folds.push_back(std::move(fr));
    }
    report.summary = finite_summary(report.acc);
    return report;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["subcase"] = to_string(subcase);
    j["median"] = summary.median;
    j["mean"] = summary.mean;
    j["acc"] = acc;
    j["rows"] = rows;
    j["config"] = config;
    bool leakage_free = true;
    nlohmann::json folds_json = nlohmann::json::array();
    for (const auto& f : folds) {
        leakage_free = leakage_free && f.leakage_free;
        nlohmann::json fj;
        fj["fold"] = f.fold;
        fj["train_rows"] = f.train_rows;
        fj["test_rows"] = f.test_rows;
        fj["zeta"] = f.zeta;
        fj["final_losses"] = f.final_losses;
        fj["median"] = f.summary.median;
        fj["mean"] = f.summary.mean;
        fj["acc"] = f.acc;
        fj["withheld_rel_rmse"] = f.withheld_rel_rmse ? nlohmann::json(*f.withheld_rel_rmse) : nlohmann::json(nullptr);
        fj["min_log_target"] = f.min_log_target;
        fj["min_fod_amplitude"] = f.min_fod_amplitude;
        fj["leakage_free"] = f.leakage_free;
        folds_json.push_back(std::move(fj));
    }
    j["folds"] = std::move(folds_json);
    j["leakage_free"] = leakage_free;
    j["zeta_policy"] = "zeta fitted on training folds only and frozen for test-fold fitting";
    return j;
}

nlohmann::json compare_reports(const std::vector<EvalReport>& reports) {
    nlohmann::json out = nlohmann::json::array();
    std::vector<double> raw;
    std::vector<nlohmann::json> entries;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        for (std::size_t j = i + 1; j < reports.size(); ++j) {
            if (reports[i].rows != reports[j].rows) throw InvalidArgument("reports scored different rows");
            std::vector<double> a, b;
            for (std::size_t k = 0; k < reports[i].acc.size(); ++k) {
                if (std::isfinite(reports[i].acc[k]) && std::isfinite(reports[j].acc[k])) {
                    a.push_back(reports[i].acc[k]);
                    b.push_back(reports[j].acc[k]);
                }
            }
            const auto test = wilcoxon_signed_rank(a, b);
            raw.push_back(test.p);
            entries.push_back({{"a", to_string(reports[i].subcase)},
                               {"b", to_string(reports[j].subcase)},
                               {"statistic", test.statistic},
                               {"n", test.n},
                               {"exact", test.exact},
                               {"p", test.p}});
        }
    }
    const auto corrected = bonferroni(raw);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        entries[i]["p_bonferroni"] = corrected[i];
        out.push_back(std::move(entries[i]));
    }
    return out;
}

}  // namespace deepshore
