#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "deepshore/error.hpp"
#include "deepshore/pipeline.hpp"

using namespace deepshore;

namespace {

const PhantomDataset& small_phantom() {
    static const PhantomDataset ds = [] {
        PhantomConfig cfg;
        cfg.n_voxels = 12;
        cfg.rotations_per_voxel = 4;
        return generate_dataset(cfg);
    }();
    return ds;
}

PipelineConfig quick_config(Subcase s) {
    PipelineConfig cfg;
    cfg.subcase = s;
    cfg.train.epochs = 3;
    cfg.train.batch_size = 16;
    cfg.train.k_folds = 2;
    cfg.eval_folds = 3;
    cfg.max_eval_folds = 2;
    cfg.zeta_opt.max_iterations = 5;
    return cfg;
}

}  // namespace

TEST_CASE("subcase names") {
    for (Subcase s : {Subcase::OptShoreToSh, Subcase::UnoptShoreToShore, Subcase::OptShoreToShore})
        CHECK(parse_subcase(to_string(s)) == s);
    CHECK_THROWS_AS(parse_subcase("shore"), InvalidArgument);
    CHECK(optimizes_zeta(Subcase::OptShoreToSh));
    CHECK_FALSE(optimizes_zeta(Subcase::UnoptShoreToShore));
    CHECK_FALSE(shore_target(Subcase::OptShoreToSh));
}

TEST_CASE("config JSON round trip") {
    PipelineConfig cfg = quick_config(Subcase::UnoptShoreToShore);
    cfg.shells = {3000.0, 9000.0};
    cfg.withhold_b = 6000.0;
    cfg.shore.lambda_n = 3e-9;
    cfg.nested = false;
    cfg.split_seed = 77;
    const auto j = cfg.to_json();
    CHECK(PipelineConfig::from_json(j).to_json() == j);
    CHECK_THROWS_AS(PipelineConfig::from_json(nlohmann::json{{"epochs", "many"}}), InvalidArgument);
}

TEST_CASE("standardizer") {
    Eigen::MatrixXd rows(3, 2);
    rows << 1, 5, 2, 5, 3, 5;
    const auto s = Standardizer::fit(rows);
    const Eigen::MatrixXd z = s.apply(rows);
    CHECK(z.col(0).mean() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(z.col(1).isZero());
    CHECK((s.invert(z) - rows).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encoders") {
    const auto& ds = small_phantom();
    const PipelineConfig cfg;
    const DirectionSet dirs = fod_directions(cfg);
    CHECK(dirs.size() == 100);
    const Eigen::MatrixXd in = encode_inputs(ds.signals, ds.samples, ds.samples.distinct_shells(), 900.0, cfg.shore, cfg.nonneg);
    CHECK(in.cols() == 50);
    CHECK(in.allFinite());
    const std::vector<double> one{6000.0};
    CHECK(encode_inputs(ds.signals, ds.samples, one, 900.0, cfg.shore, cfg.nonneg).allFinite());
    const std::vector<double> none{5000.0};
    CHECK_THROWS_AS(encode_inputs(ds.signals, ds.samples, none, 900.0, cfg.shore, cfg.nonneg), InvalidArgument);

    for (Subcase s : {Subcase::OptShoreToSh, Subcase::OptShoreToShore}) {
        const Eigen::MatrixXd t = encode_targets(ds.fods, 8, s, dirs, 900.0, cfg.shore, cfg.nonneg);
        CHECK(t.cols() == (shore_target(s) ? 50 : 45));
        const Eigen::MatrixXd amp = decode_to_amplitudes(t, s, dirs, 900.0, cfg.shore, 8);
        CHECK(amp.minCoeff() > 0.0);
        const Eigen::MatrixXd back = decode_predictions(t, s, dirs, 900.0, cfg.shore, 8);
        const auto accs = acc_rows(back, ds.fods, 8);
        for (double a : accs) CHECK(a > 0.5);
    }
}

TEST_CASE("cross-validated experiment") {
    const auto& ds = small_phantom();
    PipelineConfig cfg = quick_config(Subcase::OptShoreToShore);
    cfg.withhold_b = 6000.0;
    const EvalReport rep = run_subcase_experiment(cfg, ds);
    REQUIRE(rep.folds.size() == 2);
    const double floor = std::log(cfg.nonneg.epsilon);
    for (const auto& f : rep.folds) {
        CHECK(f.leakage_free);
        CHECK(f.min_fod_amplitude > 0.0);
        CHECK(f.min_log_target >= floor);
        CHECK(f.final_losses.size() == 2);
        REQUIRE(f.withheld_rel_rmse.has_value());
        CHECK(std::isfinite(*f.withheld_rel_rmse));
        CHECK(f.train_rows + f.test_rows == ds.rows());
    }
    CHECK(rep.acc.size() == rep.rows.size());
    CHECK(std::set<std::size_t>(rep.rows.begin(), rep.rows.end()).size() == rep.rows.size());
    CHECK(rep.summary.median == summarize_report(rep.acc).median);
    const auto j = rep.to_json();
    CHECK(j["leakage_free"] == true);
    std::vector<double> from_json = j["acc"].get<std::vector<double>>();
    CHECK(summarize_report(from_json).median == j["median"].get<double>());

    SUBCASE("same rows give comparable reports") {
        PipelineConfig other = quick_config(Subcase::UnoptShoreToShore);
        const EvalReport b = run_subcase_experiment(other, ds);
        CHECK(b.rows == rep.rows);
        for (const auto& f : b.folds) CHECK(f.zeta == doctest::Approx(default_zeta0(ds.samples)));
        const auto cmp = compare_reports({rep, b});
        CHECK(cmp.size() == 1);
    }
    SUBCASE("deterministic") {
        CHECK(run_subcase_experiment(cfg, ds).acc == rep.acc);
    }
}

TEST_CASE("single-shell input and invalid masks") {
    const auto& ds = small_phantom();
    PipelineConfig cfg = quick_config(Subcase::OptShoreToSh);
    cfg.shells = {6000.0};
    cfg.nested = false;
    cfg.max_eval_folds = 1;
    const EvalReport rep = run_subcase_experiment(cfg, ds);
    for (double a : rep.acc) CHECK(std::isfinite(a));

    cfg.shells = {4500.0};
    CHECK_THROWS_AS(run_subcase_experiment(cfg, ds), InvalidArgument);
    cfg.shells = {};
    cfg.withhold_b = 4500.0;
    CHECK_THROWS_AS(run_subcase_experiment(cfg, ds), InvalidArgument);
    cfg.withhold_b.reset();
    cfg.eval_folds = 1;
    CHECK_THROWS_AS(run_subcase_experiment(cfg, ds), InvalidArgument);
}

TEST_CASE("fit and predict use training rows only") {
    const auto& ds = small_phantom();
    PipelineConfig cfg = quick_config(Subcase::OptShoreToShore);
    cfg.nested = false;
    std::vector<std::size_t> train(30);
    for (std::size_t i = 0; i < train.size(); ++i) train[i] = i;
    const TrainedPipeline p = fit_pipeline(cfg, ds, train);
    CHECK(p.models.size() == 1);
    // Changing held-out rows must not change the fitted pipeline.
    PhantomDataset altered = ds;
    altered.signals.bottomRows(20).setConstant(0.5);
    const TrainedPipeline q = fit_pipeline(cfg, altered, train);
    CHECK(q.zeta == p.zeta);
    CHECK(q.input_norm.mean == p.input_norm.mean);
    CHECK(predict_fods(q, ds.signals, ds.samples) == predict_fods(p, ds.signals, ds.samples));
    CHECK_THROWS_AS(fit_pipeline(cfg, ds, {}), InvalidArgument);
}
