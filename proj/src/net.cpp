#include "deepshore/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "deepshore/error.hpp"

namespace deepshore {

namespace {

std::array<int, kLayerCount + 1> chain_widths(int input_dim, int output_dim) {
    std::array<int, kLayerCount + 1> w{};
    w[0] = input_dim;
    for (std::size_t i = 0; i < kHiddenWidths.size(); ++i) w[i + 1] = kHiddenWidths[i];
    w[kLayerCount] = output_dim;
    return w;
}

Eigen::MatrixXd elu_matrix(const Eigen::MatrixXd& z) { return z.unaryExpr(&elu); }

Eigen::MatrixXd elu_derivative(const Eigen::MatrixXd& z) {
    return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
}

Eigen::MatrixXd affine(const DenseLayer& layer, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd z = x * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    return z;
}

// Pre-activations z1..z5, activations h1..h5 and the output.
struct ForwardCache {
    std::array<Eigen::MatrixXd, 5> z;
    std::array<Eigen::MatrixXd, 5> h;
    Eigen::MatrixXd out;
};

void check_input(const MlpModel& model, const Eigen::MatrixXd& batch) {
    if (batch.cols() != model.input_dim) throw InvalidArgument("batch width does not match model input dimension");
}

ForwardCache run_forward(const MlpModel& model, const Eigen::MatrixXd& x) {
    ForwardCache c;
    const auto& L = model.layers;
    c.z[0] = affine(L[0], x);
    c.h[0] = elu_matrix(c.z[0]);
    c.z[1] = affine(L[1], c.h[0]);
    c.h[1] = elu_matrix(c.z[1]);
    c.z[2] = affine(L[2], c.h[1]);
    c.h[2] = elu_matrix(c.z[2]);
    c.z[3] = affine(L[3], c.h[2]) + c.h[1];  // residual from x2 into x4
    c.h[3] = elu_matrix(c.z[3]);
    c.z[4] = affine(L[4], c.h[3]);
    c.h[4] = elu_matrix(c.z[4]);
    c.out = affine(L[5], c.h[4]);
    return c;
}

void set_layer_grad(DenseLayer& g, const Eigen::MatrixXd& dz, const Eigen::MatrixXd& input) {
    g.weight.noalias() = dz.transpose() * input;
    g.bias = dz.colwise().sum().transpose();
}

}  // namespace

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

std::size_t MlpModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

double& MlpModel::parameter(std::size_t i) {
    for (auto& l : layers) {
        const auto w = static_cast<std::size_t>(l.weight.size());
        if (i < w) {
            const auto cols = static_cast<std::size_t>(l.weight.cols());
            return l.weight(static_cast<Eigen::Index>(i / cols), static_cast<Eigen::Index>(i % cols));
        }
        i -= w;
        const auto b = static_cast<std::size_t>(l.bias.size());
        if (i < b) return l.bias(static_cast<Eigen::Index>(i));
        i -= b;
    }
    throw InvalidArgument("parameter index out of range");
}

double MlpModel::parameter(std::size_t i) const { return const_cast<MlpModel&>(*this).parameter(i); }

std::size_t weight_offset(const MlpModel& model, std::size_t layer) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < layer; ++i)
        off += static_cast<std::size_t>(model.layers[i].weight.size() + model.layers[i].bias.size());
    return off;
}

std::size_t bias_offset(const MlpModel& model, std::size_t layer) {
    return weight_offset(model, layer) + static_cast<std::size_t>(model.layers[layer].weight.size());
}

MlpModel build_model(int input_dim, int output_dim, std::uint64_t seed) {
    if (input_dim < 1 || output_dim < 1) throw InvalidArgument("model dimensions must be at least 1");
    MlpModel m;
    m.input_dim = input_dim;
    m.output_dim = output_dim;
    m.seed = seed;
    std::mt19937_64 rng(seed);
    const auto widths = chain_widths(input_dim, output_dim);
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        const int fan_in = widths[i];
        const int fan_out = widths[i + 1];
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
        m.layers[i].weight.resize(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c) m.layers[i].weight(r, c) = normal(rng);
        m.layers[i].bias = Eigen::VectorXd::Zero(fan_out);
    }
    return m;
}

Eigen::MatrixXd forward(const MlpModel& model, const Eigen::MatrixXd& batch) {
    check_input(model, batch);
    return run_forward(model, batch).out;
}

Eigen::MatrixXd predict(const MlpModel& model, const Eigen::MatrixXd& inputs) { return forward(model, inputs); }

double mse_loss(const MlpModel& model, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& targets) {
    const Eigen::MatrixXd out = forward(model, batch);
    if (targets.rows() != out.rows() || targets.cols() != out.cols())
        throw InvalidArgument("target shape does not match model output");
    return (out - targets).squaredNorm() / static_cast<double>(out.size());
}

double loss_and_gradients(const MlpModel& model, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& targets,
                          MlpGradients& grads) {
    check_input(model, batch);
    if (targets.rows() != batch.rows() || targets.cols() != model.output_dim)
        throw InvalidArgument("target shape does not match model output");
    const ForwardCache c = run_forward(model, batch);
    const auto& L = model.layers;
    const Eigen::MatrixXd diff = c.out - targets;
    const double loss = diff.squaredNorm() / static_cast<double>(diff.size());

    Eigen::MatrixXd d_out = (2.0 / static_cast<double>(diff.size())) * diff;
    set_layer_grad(grads[5], d_out, c.h[4]);
    Eigen::MatrixXd dz5 = (d_out * L[5].weight).cwiseProduct(elu_derivative(c.z[4]));
    set_layer_grad(grads[4], dz5, c.h[3]);
    Eigen::MatrixXd dz4 = (dz5 * L[4].weight).cwiseProduct(elu_derivative(c.z[3]));
    set_layer_grad(grads[3], dz4, c.h[2]);
    Eigen::MatrixXd dz3 = (dz4 * L[3].weight).cwiseProduct(elu_derivative(c.z[2]));
    set_layer_grad(grads[2], dz3, c.h[1]);
    // h2 feeds both x3 and, through the skip, the x4 pre-activation.
    Eigen::MatrixXd dz2 = (dz3 * L[2].weight + dz4).cwiseProduct(elu_derivative(c.z[1]));
    set_layer_grad(grads[1], dz2, c.h[0]);
    Eigen::MatrixXd dz1 = (dz2 * L[1].weight).cwiseProduct(elu_derivative(c.z[0]));
    set_layer_grad(grads[0], dz1, batch);
    return loss;
}

void VoxelDataset::validate() const {
    if (inputs.rows() != targets.rows() || static_cast<std::size_t>(inputs.rows()) != block_ids.size())
        throw InvalidArgument("dataset row counts differ");
}

VoxelDataset VoxelDataset::select(const std::vector<std::size_t>& rows) const {
    VoxelDataset out;
    out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
    out.targets.resize(static_cast<Eigen::Index>(rows.size()), targets.cols());
    out.block_ids.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(rows[i]);
        out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(r);
        out.targets.row(static_cast<Eigen::Index>(i)) = targets.row(r);
        out.block_ids.push_back(block_ids[rows[i]]);
    }
    return out;
}

TrainResult train(MlpModel model, const VoxelDataset& data, const TrainConfig& cfg, const VoxelDataset* validation) {
    data.validate();
    if (data.rows() == 0) throw InvalidArgument("training set is empty");
    if (cfg.epochs < 1) throw InvalidArgument("epochs must be at least 1");
    if (cfg.batch_size < 1) throw InvalidArgument("batch size must be at least 1");
    if (data.inputs.cols() != model.input_dim || data.targets.cols() != model.output_dim)
        throw InvalidArgument("dataset widths do not match model dimensions");
    if (validation) {
        validation->validate();
        if (validation->inputs.cols() != model.input_dim || validation->targets.cols() != model.output_dim)
            throw InvalidArgument("validation widths do not match model dimensions");
    }

    MlpGradients grads;
    MlpGradients mean_square;
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        mean_square[i].weight = Eigen::MatrixXd::Zero(model.layers[i].weight.rows(), model.layers[i].weight.cols());
        mean_square[i].bias = Eigen::VectorXd::Zero(model.layers[i].bias.size());
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(data.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    const bool early_stop = validation != nullptr && cfg.early_stop_patience > 0;

    auto rms_update = [&](auto& param, auto& ms, const auto& g) {
        ms.array() = cfg.rho * ms.array() + (1.0 - cfg.rho) * g.array().square();
        param.array() -= cfg.learning_rate * g.array() / (ms.array().sqrt() + cfg.epsilon);
    };

    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    Eigen::MatrixXd xb, tb;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t count = std::min(batch, order.size() - start);
            xb.resize(static_cast<Eigen::Index>(count), data.inputs.cols());
            tb.resize(static_cast<Eigen::Index>(count), data.targets.cols());
            for (std::size_t i = 0; i < count; ++i) {
                xb.row(static_cast<Eigen::Index>(i)) = data.inputs.row(static_cast<Eigen::Index>(order[start + i]));
                tb.row(static_cast<Eigen::Index>(i)) = data.targets.row(static_cast<Eigen::Index>(order[start + i]));
            }
            const double loss = loss_and_gradients(model, xb, tb, grads);
            epoch_loss += loss * static_cast<double>(count);
            for (std::size_t l = 0; l < kLayerCount; ++l) {
                rms_update(model.layers[l].weight, mean_square[l].weight, grads[l].weight);
                rms_update(model.layers[l].bias, mean_square[l].bias, grads[l].bias);
            }
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(order.size()));

        if (validation) {
            const double val = mse_loss(model, validation->inputs, validation->targets);
            result.validation_history.push_back(val);
            if (early_stop) {
                if (val < best_val) {
                    best_val = val;
                    result.model = model;
                    result.best_epoch = epoch;
                    since_best = 0;
                } else if (++since_best >= cfg.early_stop_patience) {
                    break;
                }
            }
        }
    }
    if (!early_stop) {
        result.model = std::move(model);
        result.best_epoch = static_cast<int>(result.loss_history.size()) - 1;
    }
    return result;
}

double gradient_check_indices(const MlpModel& model, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& targets,
                              const std::vector<std::size_t>& indices, double step) {
    MlpGradients grads;
    loss_and_gradients(model, batch, targets, grads);
    MlpModel probe = model;
    double worst = 0.0;
    for (std::size_t idx : indices) {
        // Locate the analytic entry through the same flat layout.
        double analytic = 0.0;
        {
            std::size_t i = idx;
            for (std::size_t l = 0; l < kLayerCount; ++l) {
                const auto w = static_cast<std::size_t>(grads[l].weight.size());
                if (i < w) {
                    const auto cols = static_cast<std::size_t>(grads[l].weight.cols());
                    analytic = grads[l].weight(static_cast<Eigen::Index>(i / cols), static_cast<Eigen::Index>(i % cols));
                    break;
                }
                i -= w;
                const auto b = static_cast<std::size_t>(grads[l].bias.size());
                if (i < b) {
                    analytic = grads[l].bias(static_cast<Eigen::Index>(i));
                    break;
                }
                i -= b;
            }
        }
        const double original = probe.parameter(idx);
        probe.parameter(idx) = original + step;
        const double up = mse_loss(probe, batch, targets);
        probe.parameter(idx) = original - step;
        const double down = mse_loss(probe, batch, targets);
        probe.parameter(idx) = original;
        const double numeric = (up - down) / (2.0 * step);
        // Floor keeps vanishing gradients from turning round-off into a large ratio.
        const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(analytic - numeric) / scale);
    }
    return worst;
}

double gradient_check(const MlpModel& model, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& targets,
                      std::size_t samples, std::uint64_t seed, double step) {
    const std::size_t total = model.parameter_count();
    std::vector<std::size_t> all(total);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(std::min(samples, total));
    return gradient_check_indices(model, batch, targets, all, step);
}

std::vector<FoldSplit> kfold_split(const std::vector<int>& block_ids, int k, std::uint64_t seed) {
    if (k < 2) throw InvalidArgument("k must be at least 2");
    std::vector<int> blocks = block_ids;
    std::sort(blocks.begin(), blocks.end());
    blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
    if (blocks.size() < static_cast<std::size_t>(k)) throw InvalidArgument("fewer blocks than folds");

    std::mt19937_64 rng(seed);
    std::shuffle(blocks.begin(), blocks.end(), rng);
    const std::size_t per = blocks.size() / static_cast<std::size_t>(k);
    const std::size_t extra = blocks.size() % static_cast<std::size_t>(k);
    std::map<int, int> fold_of;
    std::size_t pos = 0;
    for (int f = 0; f < k; ++f) {
        const std::size_t size = per + (static_cast<std::size_t>(f) < extra ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i) fold_of[blocks[pos++]] = f;
    }
    std::vector<FoldSplit> folds(static_cast<std::size_t>(k));
    for (std::size_t r = 0; r < block_ids.size(); ++r) {
        const int f = fold_of.at(block_ids[r]);
        for (int g = 0; g < k; ++g) (g == f ? folds[g].test : folds[g].train).push_back(r);
    }
    return folds;
}

std::vector<FoldSplit> kfold_split(const VoxelDataset& data, int k, std::uint64_t seed) {
    data.validate();
    return kfold_split(data.block_ids, k, seed);
}

}  // namespace deepshore
