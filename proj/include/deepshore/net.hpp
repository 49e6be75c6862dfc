#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace deepshore {

/// Hidden widths x1..x5. The x2 output is added to the x4 pre-activation.
inline constexpr std::array<int, 5> kHiddenWidths{400, 45, 200, 45, 200};
inline constexpr std::size_t kLayerCount = kHiddenWidths.size() + 1;

struct DenseLayer {
    Eigen::MatrixXd weight;  // out × in
    Eigen::VectorXd bias;    // out
};

/// Residual feed-forward regressor: five elu hidden layers and a linear output.
struct MlpModel {
    int input_dim = 0;
    int output_dim = 0;
    std::uint64_t seed = 0;
    std::array<DenseLayer, kLayerCount> layers;

    std::size_t parameter_count() const;
    /// Flat view over all parameters, layer-major, weights (row-major) then bias.
    double& parameter(std::size_t i);
    double parameter(std::size_t i) const;
};

/// Seeded Gaussian init with σ = √(2/(fan_in+fan_out)); zero biases.
MlpModel build_model(int input_dim, int output_dim, std::uint64_t seed);

double elu(double x);

/// Rows of `batch` are samples.
Eigen::MatrixXd forward(const MlpModel& model, const Eigen::MatrixXd& batch);
Eigen::MatrixXd predict(const MlpModel& model, const Eigen::MatrixXd& inputs);

/// Mean over rows and outputs of the squared error.
double mse_loss(const MlpModel& model, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& targets);

/// Same layout as MlpModel::layers.
using MlpGradients = std::array<DenseLayer, kLayerCount>;

/// Analytic gradient of the MSE loss; returns the loss.
double loss_and_gradients(const MlpModel& model, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& targets,
                          MlpGradients& grads);

struct VoxelDataset {
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;
    std::vector<int> block_ids;

    std::size_t rows() const noexcept { return static_cast<std::size_t>(inputs.rows()); }
    /// Throws InvalidArgument on row-count mismatch.
    void validate() const;
    VoxelDataset select(const std::vector<std::size_t>& rows) const;
};

struct TrainConfig {
    int batch_size = 1000;
    int epochs = 200;
    double rho = 0.9;
    double learning_rate = 1e-3;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    int k_folds = 5;
    int early_stop_patience = 0;  // 0 disables; needs a validation set
};

struct TrainResult {
    MlpModel model;
    std::vector<double> loss_history;        // mean training loss per epoch
    std::vector<double> validation_history;  // empty without validation data
    int best_epoch = -1;
};

/// Mini-batch RMSProp on MSE with seeded per-epoch shuffling. With early
/// stopping enabled, the model with the lowest validation loss is returned.
TrainResult train(MlpModel model, const VoxelDataset& data, const TrainConfig& cfg,
                  const VoxelDataset* validation = nullptr);

/// Max relative error between analytic gradients and central differences over
/// `samples` randomly chosen parameters.
double gradient_check(const MlpModel& model, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& targets,
                      std::size_t samples = 200, std::uint64_t seed = 0, double step = 1e-5);

/// Same, restricted to the given parameter indices.
double gradient_check_indices(const MlpModel& model, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& targets,
                              const std::vector<std::size_t>& indices, double step = 1e-5);

/// First flat parameter index of each layer's weight and bias.
std::size_t weight_offset(const MlpModel& model, std::size_t layer);
std::size_t bias_offset(const MlpModel& model, std::size_t layer);

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Shuffles distinct block ids by seed and deals them into k near-equal folds
/// (the first `blocks % k` folds get one extra block). Rows follow their block.
std::vector<FoldSplit> kfold_split(const std::vector<int>& block_ids, int k, std::uint64_t seed);
std::vector<FoldSplit> kfold_split(const VoxelDataset& data, int k, std::uint64_t seed);

}  // namespace deepshore
