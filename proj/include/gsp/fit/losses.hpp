#pragma once

#include "gsp/core/image.hpp"
#include "gsp/core/types.hpp"

namespace gsp {

struct LossConfig {
    double lambda1 = 0.2; // D-SSIM weight
    double lambda2 = 0.2; // normal regularizer weight
    double lambda3 = 1.0; // mask weight
    int ssim_window = 11;
    double ssim_sigma = 1.5;
};

// Mean absolute per-channel difference.
double loss_l1(const Image& rendered, const Image& target);
// d(loss_l1)/d(rendered), same shape as the inputs.
Image loss_l1_gradient(const Image& rendered, const Image& target);

// (1 - SSIM)/2 with Gaussian-weighted windows (truncated and renormalized
// at the borders), averaged over pixels and channels.
double loss_dssim(const Image& rendered, const Image& target, const LossConfig& cfg = {});
Image loss_dssim_gradient(const Image& rendered, const Image& target, const LossConfig& cfg = {});

// Camera-space normals from a camera-z depth map by central differences of
// the back-projected positions (one-sided at borders/mask edges). Excluded
// pixels get a zero normal. Normals face the camera (negative z).
Image depth_to_normal(const Image& depth_z, const Camera& camera, const Image* mask = nullptr);

// Mean over mask>0 pixels of 1 - dot(normalize(n), n_ref); pixels whose
// blended normal is too short to normalize are skipped.
double loss_normal(const Image& normal_map, const Image& normal_ref, const Image& mask);

struct LossComponents {
    double l1 = 0.0;
    double dssim = 0.0;
    double normal = 0.0;
    double mask = 0.0;
};

// (1 - l1_weight) L1 + l1_weight DSSIM + l2 normal + l3 mask.
double loss_total(const LossComponents& c, const LossConfig& cfg);

} // namespace gsp
