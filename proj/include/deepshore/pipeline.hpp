#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "deepshore/net.hpp"
#include "deepshore/nonneg.hpp"
#include "deepshore/phantom.hpp"
#include "deepshore/shore.hpp"
#include "deepshore/stats.hpp"

namespace deepshore {

/// Input/output representation pairs for the network.
enum class Subcase {
    OptShoreToSh,       // ζ-optimized SHORE signal → SH FOD
    UnoptShoreToShore,  // fixed-ζ SHORE signal → SHORE FOD
    OptShoreToShore,    // ζ-optimized SHORE signal → SHORE FOD
};

std::string to_string(Subcase s);
Subcase parse_subcase(const std::string& name);
bool optimizes_zeta(Subcase s);
bool shore_target(Subcase s);

struct PipelineConfig {
    Subcase subcase = Subcase::OptShoreToShore;
    std::vector<double> shells;          // input shells; empty = every shell in the data
    std::optional<double> withhold_b;    // removed from the input and scored as a reconstruction target
    ShoreFitConfig shore;
    NonNegConfig nonneg;
    TrainConfig train;
    ZetaOptimizerConfig zeta_opt;
    double zeta0 = 0.0;                  // 0 = median(b)/8 of the input scheme
    std::size_t zeta_subsample = 0;      // 0 = all training voxels
    std::size_t fod_directions = 100;
    std::uint64_t fod_dirs_seed = 7;
    int fod_dirs_iterations = 1000;
    int fod_sh_order = 8;
    int eval_folds = 8;
    int max_eval_folds = 0;              // 0 = run every fold
    bool nested = true;                  // ensemble of train.k_folds inner models per fold
    std::uint64_t split_seed = 0;
    bool standardize = true;

    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
};

/// The fixed FOD sampling set shared by target encoding and prediction decoding.
DirectionSet fod_directions(const PipelineConfig& cfg);

/// Per-column affine normalization fitted on training rows.
struct Standardizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& rows);
    static Standardizer identity(Eigen::Index cols);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const;
    Eigen::MatrixXd invert(const Eigen::MatrixXd& rows) const;
};

/// Everything needed to turn signals into predicted FODs.
struct TrainedPipeline {
    Subcase subcase = Subcase::OptShoreToShore;
    std::vector<double> input_shells;
    double zeta = 0.0;
    ShoreFitConfig shore;
    NonNegConfig nonneg;
    std::size_t fod_directions = 100;
    std::uint64_t fod_dirs_seed = 7;
    int fod_dirs_iterations = 1000;
    int fod_sh_order = 8;
    Standardizer input_norm;
    Standardizer target_norm;
    std::vector<MlpModel> models;  // predictions are averaged
    std::vector<double> final_losses;
};

/// Log-space SHORE coefficients of the selected input shells, one row per voxel.
Eigen::MatrixXd encode_inputs(const Eigen::MatrixXd& signals, const QSpaceSamples& samples,
                              const std::vector<double>& shells, double zeta, const ShoreFitConfig& shore,
                              const NonNegConfig& nonneg);

/// Log-space FOD coefficients (SH or b = 2000 SHORE) from ground-truth SH rows.
Eigen::MatrixXd encode_targets(const Eigen::MatrixXd& fods, int sh_order, Subcase subcase, const DirectionSet& dirs,
                               double zeta, const ShoreFitConfig& shore, const NonNegConfig& nonneg);

/// Positive FOD amplitudes on `dirs` from predicted log-space coefficients.
Eigen::MatrixXd decode_to_amplitudes(const Eigen::MatrixXd& coeffs, Subcase subcase, const DirectionSet& dirs,
                                     double zeta, const ShoreFitConfig& shore, int sh_order);

/// Linear-space SH FODs (one row per voxel) from predicted coefficients.
Eigen::MatrixXd decode_predictions(const Eigen::MatrixXd& coeffs, Subcase subcase, const DirectionSet& dirs,
                                   double zeta, const ShoreFitConfig& shore, int sh_order);

/// The ζ a subcase uses: optimized on the given rows, or ζ₀.
ZetaResult choose_zeta(const PipelineConfig& cfg, const PhantomDataset& data, const std::vector<std::size_t>& rows);

/// Fits ζ, normalizers and networks on `train_rows` only.
TrainedPipeline fit_pipeline(const PipelineConfig& cfg, const PhantomDataset& data,
                             const std::vector<std::size_t>& train_rows);

/// Network outputs in log-space coefficients (after un-normalizing).
Eigen::MatrixXd predict_coefficients(const TrainedPipeline& p, const Eigen::MatrixXd& signals,
                                     const QSpaceSamples& samples);

/// Predicted SH FODs in linear space.
Eigen::MatrixXd predict_fods(const TrainedPipeline& p, const Eigen::MatrixXd& signals, const QSpaceSamples& samples);

/// ACC row by row; rows whose correlation is undefined yield NaN.
std::vector<double> acc_rows(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth, int sh_order);

struct FoldReport {
    int fold = 0;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    double zeta = 0.0;
    int zeta_iterations = 0;
    std::vector<double> final_losses;
    std::vector<double> acc;
    Summary summary{0.0, 0.0};
    std::optional<double> withheld_rel_rmse;  // raw-signal fit on the input shells, scored on the withheld one
    double min_log_target = 0.0;       // smallest clamped log sample seen (floor audit)
    double min_fod_amplitude = 0.0;    // smallest exp-restored prediction amplitude
    bool leakage_free = false;
};

struct EvalReport {
    Subcase subcase = Subcase::OptShoreToShore;
    std::vector<double> acc;  // held-out rows, fold order
    std::vector<std::size_t> rows;
    Summary summary{0.0, 0.0};
    std::vector<FoldReport> folds;
    nlohmann::json config;

    nlohmann::json to_json() const;
};

/// Block-aware cross-validated experiment for one subcase.
EvalReport run_subcase_experiment(const PipelineConfig& cfg, const PhantomDataset& data);

/// Pairwise signed-rank tests with Bonferroni correction over reports that
/// scored the same rows.
nlohmann::json compare_reports(const std::vector<EvalReport>& reports);

}  // namespace deepshore
