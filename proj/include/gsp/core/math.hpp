#pragma once

#include "gsp/core/types.hpp"

namespace gsp {

// Sigma = R * diag(scale^2) * R^T. Symmetric positive definite for
// positive scales.
Mat3 covariance_from_shape(const Vec3& scale, const Quat& rotation);

// Inverse of a symmetric PSD matrix with eigenvalues clamped from below
// to eps_rel * lambda_max before inverting. Near-degenerate splats show
// up after optimization and must not poison the buffers downstream.
Mat3 inverse_psd_clamped(const Mat3& sigma, double eps_rel = 1e-7);

// Real spherical harmonics evaluation, degree 0..3, splatting coefficient
// order. v must be unit length.
Vec3 evaluate_sh(const ShCoeffs& sh, const Vec3& v);

// Distance along the ray (o, v) maximizing the Gaussian response
// exp(-0.5 (o + tau v - mu)^T Sigma^{-1} (o + tau v - mu)):
//   tau* = ((mu - o)^T Sigma^{-1} v) / (v^T Sigma^{-1} v)
double ray_gaussian_argmax(const Vec3& mu, const Mat3& sigma_inv, const Vec3& o, const Vec3& v);

// Convenience overload that inverts sigma (clamped) internally.
double ray_gaussian_argmax_cov(const Vec3& mu, const Mat3& sigma, const Vec3& o, const Vec3& v);

// Gaussian response at tau on the ray; used by tests and the rasterizer.
double ray_gaussian_value(const Vec3& mu, const Mat3& sigma_inv, const Vec3& o, const Vec3& v,
                          double tau);

} // namespace gsp
