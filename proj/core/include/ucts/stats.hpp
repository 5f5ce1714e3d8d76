#pragma once

#include <Eigen/Dense>
#include <span>

namespace ucts::stats {

// Inverse standard normal CDF (Wichura's PPND16), absolute error below
// 1e-10 over (0, 1). Throws RangeError outside (0, 1).
double normal_quantile(double p);

double normal_cdf(double x);

// Regularized incomplete gamma P(a, x) and Q(a, x) = 1 - P(a, x).
double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);

// Regularized incomplete beta I_x(a, b).
double regularized_beta(double a, double b, double x);

double chi_squared_cdf(double x, double df);
double chi_squared_sf(double x, double df);

double f_cdf(double x, double df1, double df2);

// Residuals from OLS of y on the columns of X (rank-revealing QR).
Eigen::VectorXd ols_residuals(const Eigen::VectorXd& y, const Eigen::MatrixXd& X);

double mean(std::span<const double> x);
double variance(std::span<const double> x);  // divisor n - 1

}  // namespace ucts::stats
