#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace deepshore {

struct NonNegConfig {
    double epsilon = 0.005;
};

/// ln(max(v, ε)) elementwise. Used on sphere samples of both signal and FOD
/// before their basis fits.
std::vector<double> clamp_log(std::span<const double> values, const NonNegConfig& cfg = {});
Eigen::MatrixXd clamp_log(const Eigen::MatrixXd& values, const NonNegConfig& cfg = {});

/// exp(v) elementwise; throws Saturation when the result would overflow.
std::vector<double> exp_restore(std::span<const double> values);
Eigen::MatrixXd exp_restore(const Eigen::MatrixXd& values);

}  // namespace deepshore
