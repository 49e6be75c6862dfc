#include "deepshore/nonneg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deepshore/error.hpp"

namespace deepshore {

namespace {

// Largest argument whose exponential is finite.
const double kMaxExpArg = std::log(std::numeric_limits<double>::max());

double checked_floor(const NonNegConfig& cfg) {
    if (!(cfg.epsilon > 0.0) || !std::isfinite(cfg.epsilon)) throw InvalidArgument("nonneg epsilon must be positive");
    return cfg.epsilon;
}

double restore_one(double v) {
    if (std::isnan(v) || v > kMaxExpArg) throw Saturation("exp_restore overflow");
    return std::max(std::exp(v), std::numeric_limits<double>::denorm_min());
}

}  // namespace

std::vector<double> clamp_log(std::span<const double> values, const NonNegConfig& cfg) {
    const double eps = checked_floor(cfg);
    std::vector<double> out(values.size());
    // NaN compares false and falls to the floor.
    std::transform(values.begin(), values.end(), out.begin(),
                   [eps](double v) { return std::log(v > eps ? v : eps); });
    return out;
}

Eigen::MatrixXd clamp_log(const Eigen::MatrixXd& values, const NonNegConfig& cfg) {
    const double eps = checked_floor(cfg);
    return values.unaryExpr([eps](double v) { return std::log(v > eps ? v : eps); });
}

std::vector<double> exp_restore(std::span<const double> values) {
    std::vector<double> out(values.size());
    std::transform(values.begin(), values.end(), out.begin(), restore_one);
    return out;
}

Eigen::MatrixXd exp_restore(const Eigen::MatrixXd& values) { return values.unaryExpr(&restore_one); }

}  // namespace deepshore
