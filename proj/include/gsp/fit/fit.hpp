#pragma once

#include "gsp/fit/losses.hpp"
#include "gsp/shade/shade.hpp"

namespace gsp {

struct FitView {
    Camera camera;
    Image target;     // 3ch linear
    Image silhouette; // 1ch mask in [0,1]
    // Stage-1 environment plate composited behind the object (same size as
    // target); empty falls back to the shading background constant.
    Image environment;
};

struct FitSelection {
    bool normal = false;
    bool transparency = false;
    bool ior = false;
    bool base_color = false;
};

struct FitOptions {
    LossConfig loss;
    FitSelection optimize;
    double lr_normal = 1e-3;
    double lr_transparency = 5e-3;
    double lr_ior = 5e-3;
    double lr_base = 1e-2;
    double momentum = 0.9;
    int iterations = 100;
    // Fit-time shading: queries are run to tight convergence so the
    // analytic gradients of the fixed point hold.
    ShadeOptions shade;
    double normal_fd_step = 1e-4;

    FitOptions() {
        shade.query.iterations = 30;
        shade.query.epsilon = 1e-10;
    }
};

class FitDivergedError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// One forward render under the fit model plus its loss breakdown.
struct FitRender {
    RenderResult pass;  // G-buffer etc.
    Image shaded;       // the forward model output
    Image coverage;     // 1ch, 1 where alpha >= threshold
    Image depth_z;      // camera-z depth for the normal regularizer
    Image normal_cam;   // blended normal rotated into camera frame
    LossComponents components;
    double total = 0.0;
};

FitRender fit_forward(const std::vector<GaussianPrimitive>& object, const FitView& view,
                      const ProbeGrid& grid, const BvhIndex& bvh, const FitOptions& opts);

struct AttributeGradients {
    std::vector<Vec3> normal;
    std::vector<double> transparency;
    std::vector<double> ior;
    std::vector<Vec3> base_color;
    // Accumulated blend weight per primitive; the optimizer divides by it
    // so visible and barely-visible primitives take comparable steps.
    std::vector<double> weight_sum;
    double pixel_scale = 1.0; // photometric sample count of the view
};

// d(total loss)/d(per-primitive attributes) on one view. Analytic through
// the alpha blend and shading chain for base color, transparency and IOR
// (including the implicit derivative of the converged probe query);
// central finite differences on the blended normal.
AttributeGradients fit_gradients(const std::vector<GaussianPrimitive>& object, const FitView& view,
                                 const ProbeGrid& grid, const BvhIndex& bvh,
                                 const FitOptions& opts);

struct FitState {
    std::vector<GaussianPrimitive> primitives;
    int iteration = 0;
    std::vector<double> loss_history;
    std::vector<Vec3> vel_normal;
    std::vector<double> vel_transparency;
    std::vector<double> vel_ior;
    std::vector<Vec3> vel_base;
};

// Momentum gradient descent over the selected attributes, one view per
// step (round robin). Attributes are re-projected into their valid ranges
// after every step.
FitState fit_attributes(std::vector<GaussianPrimitive> object, const std::vector<FitView>& views,
                        const ProbeGrid& grid, const BvhIndex& bvh, const FitOptions& opts);

// --- pieces exposed for the gradient validation ---

// Blended pixel inputs reconstructed in double precision from the recorded
// contributions (weights are fixed: shapes are frozen during fitting).
PixelInputs blend_pixel_inputs(const std::vector<GaussianPrimitive>& object,
                               const std::vector<std::pair<int, double>>& contributions,
                               const Camera& camera, int x, int y, double hit_tau);

// Analytic d(pixel color)/d(blended attribute) for one pixel.
struct PixelAttributeJacobian {
    Vec3 d_dtransparency = Vec3::Zero();
    Vec3 d_dior = Vec3::Zero();
    Mat3 d_dbase = Mat3::Zero(); // column c: d(pixel)/d(base[c])
    bool valid = false;
};
PixelAttributeJacobian pixel_attribute_jacobian(const PixelInputs& in, const Ray& view_ray,
                                                const ProbeGrid& grid, const BvhIndex& bvh,
                                                const ShadeOptions& opts);

} // namespace gsp
