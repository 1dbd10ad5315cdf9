#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <iostream>
#include <limits>
#include <string>

#include "fedfreeze/tensor.hpp"

namespace fedfreeze {

/// In-memory sentinel for the PSNR of identical images. Reports serialize it as "inf".
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

inline bool is_psnr_identical(double psnr) { return psnr == kPsnrIdentical; }

struct ImageMetrics {
  double mae = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

namespace detail {

template <typename A, typename B>
void require_same_shape(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape (" + std::to_string(a.rows()) + "," +
                     std::to_string(a.cols()) + ") vs (" + std::to_string(b.rows()) + "," +
                     std::to_string(b.cols()) + ")");
  }
}

// Valid-mode separable filter with a symmetric 1-D kernel.
template <typename Scalar>
RowMatrix<Scalar> filter_valid(const RowMatrix<Scalar>& img, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& k) {
  const Index n = k.size();
  const Index h = img.rows(), w = img.cols();
  RowMatrix<Scalar> tmp(h, w - n + 1);
  for (Index x = 0; x + n <= w; ++x) tmp.col(x) = img.middleCols(x, n) * k;
  RowMatrix<Scalar> out(h - n + 1, w - n + 1);
  for (Index y = 0; y + n <= h; ++y) out.row(y) = k.transpose() * tmp.middleRows(y, n);
  return out;
}

}  // namespace detail

template <typename A, typename B>
double mae(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b) {
  detail::require_same_shape(a, b, "mae");
  return static_cast<double>((a.derived().array() - b.derived().array()).abs().mean());
}

template <typename A, typename B>
double mse(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b) {
  detail::require_same_shape(a, b, "mse");
  return static_cast<double>((a.derived().array() - b.derived().array()).square().mean());
}

/// 10·log10(range² / MSE); kPsnrIdentical when the images are equal.
template <typename A, typename B>
double psnr(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b, double data_range = 1.0) {
  if (!(data_range > 0.0)) throw std::invalid_argument("psnr: data_range must be positive");
  const double err = mse(a, b);
  if (err == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(data_range * data_range / err);
}

/// Gaussian-window SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, data range 1), averaged over
/// window positions lying fully inside the image. Images smaller than the window fall back
/// to one global, uniformly weighted window.
template <typename A, typename B>
double ssim(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b) {
  detail::require_same_shape(a, b, "ssim");
  constexpr Index kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double C1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double C2 = (0.03 * 1.0) * (0.03 * 1.0);

  const RowMatrix<double> x = a.derived().template cast<double>();
  const RowMatrix<double> y = b.derived().template cast<double>();

  if (x.rows() < kWin || x.cols() < kWin) {
    std::cerr << "warning: ssim image smaller than 11x11 window, using a global window\n";
    const double mx = x.mean(), my = y.mean();
    const double vx = (x.array() - mx).square().mean();
    const double vy = (y.array() - my).square().mean();
    const double cxy = ((x.array() - mx) * (y.array() - my)).mean();
    return ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
  }

  Eigen::VectorXd k(kWin);
  for (Index i = 0; i < kWin; ++i) {
    const double d = static_cast<double>(i - kWin / 2);
    k[i] = std::exp(-d * d / (2 * kSigma * kSigma));
  }
  k /= k.sum();

  const RowMatrix<double> mx = detail::filter_valid(x, k);
  const RowMatrix<double> my = detail::filter_valid(y, k);
  const RowMatrix<double> xx = detail::filter_valid<double>(x.cwiseProduct(x), k);
  const RowMatrix<double> yy = detail::filter_valid<double>(y.cwiseProduct(y), k);
  const RowMatrix<double> xy = detail::filter_valid<double>(x.cwiseProduct(y), k);

  const auto vx = xx.array() - mx.array().square();
  const auto vy = yy.array() - my.array().square();
  const auto cxy = xy.array() - mx.array() * my.array();
  const auto num = (2 * mx.array() * my.array() + C1) * (2 * cxy + C2);
  const auto den = (mx.array().square() + my.array().square() + C1) * (vx + vy + C2);
  return (num / den).mean();
}

template <typename A, typename B>
ImageMetrics image_metrics(const Eigen::DenseBase<A>& prediction, const Eigen::DenseBase<B>& truth) {
  return {mae(prediction, truth), psnr(prediction, truth), ssim(prediction, truth)};
}

}  // namespace fedfreeze
