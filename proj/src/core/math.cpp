#include "gsp/core/math.hpp"

#include <cmath>

namespace gsp {

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_deg,
                       int width, int height) {
    Vec3 fwd = (target - eye).normalized();
    Vec3 right = fwd.cross(up).normalized();
    Vec3 down = fwd.cross(right).normalized();
    Camera cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = fwd.transpose();
    cam.translation = -(cam.rotation * eye);
    cam.width = width;
    cam.height = height;
    double f = 0.5 * height / std::tan(0.5 * fov_y_deg * kPi / 180.0);
    cam.fx = cam.fy = f;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    return cam;
}

void validate(const GaussianPrimitive& p) {
    if (!is_finite(p.position))
        throw std::invalid_argument("primitive position is not finite");
    if (!is_finite(p.scale) || p.scale.minCoeff() <= 0.0)
        throw std::invalid_argument("primitive scale must be positive and finite");
    if (std::abs(p.rotation.norm() - 1.0) > 1e-6)
        throw std::invalid_argument("primitive rotation must be a unit quaternion");
    if (!(p.opacity >= 0.0 && p.opacity <= 1.0))
        throw std::invalid_argument("opacity must lie in [0,1]");
    if (std::abs(p.attrs.normal.norm() - 1.0) > 1e-6)
        throw std::invalid_argument("attribute normal must be unit length");
}

void validate(const Camera& c) {
    Mat3 rtr = c.rotation.transpose() * c.rotation;
    if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
        throw std::invalid_argument("camera rotation must be orthonormal");
    if (c.width <= 0 || c.height <= 0)
        throw std::invalid_argument("camera resolution must be positive");
}

Mat3 covariance_from_shape(const Vec3& scale, const Quat& rotation) {
    if (!is_finite(scale) || !std::isfinite(rotation.norm()))
        throw std::invalid_argument("covariance_from_shape: non-finite inputs");
    Mat3 r = rotation.normalized().toRotationMatrix();
    Mat3 m = r * scale.cwiseProduct(scale).asDiagonal() * r.transpose();
    // Symmetrize against roundoff.
    return 0.5 * (m + m.transpose());
}

Mat3 inverse_psd_clamped(const Mat3& sigma, double eps_rel) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(sigma);
    if (es.info() != Eigen::Success)
        throw DegenerateCovarianceError("eigendecomposition failed");
    Vec3 evals = es.eigenvalues();
    double lmax = evals.maxCoeff();
    if (!(lmax > 0.0) || !std::isfinite(lmax))
        throw DegenerateCovarianceError("covariance has no positive eigenvalue");
    double floor = eps_rel * lmax;
    Vec3 inv;
    for (int i = 0; i < 3; ++i)
        inv[i] = 1.0 / std::max(evals[i], floor);
    Mat3 out = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

namespace {

constexpr double kSh0 = 0.28209479177387814;
constexpr double kSh1 = 0.4886025119029199;
constexpr double kSh2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                            -1.0925484305920792, 0.5462742152960396};
constexpr double kSh3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                            0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                            -0.5900435899266435};

} // namespace

Vec3 evaluate_sh(const ShCoeffs& sh, const Vec3& v) {
    const double x = v.x(), y = v.y(), z = v.z();
    double basis[16];
    basis[0] = kSh0;
    basis[1] = -kSh1 * y;
    basis[2] = kSh1 * z;
    basis[3] = -kSh1 * x;
    const double xx = x * x, yy = y * y, zz = z * z;
    basis[4] = kSh2[0] * x * y;
    basis[5] = kSh2[1] * y * z;
    basis[6] = kSh2[2] * (2.0 * zz - xx - yy);
    basis[7] = kSh2[3] * x * z;
    basis[8] = kSh2[4] * (xx - yy);
    basis[9] = kSh3[0] * y * (3.0 * xx - yy);
    basis[10] = kSh3[1] * x * y * z;
    basis[11] = kSh3[2] * y * (4.0 * zz - xx - yy);
    basis[12] = kSh3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    basis[13] = kSh3[4] * x * (4.0 * zz - xx - yy);
    basis[14] = kSh3[5] * z * (xx - yy);
    basis[15] = kSh3[6] * x * (xx - 3.0 * yy);
    Vec3 rgb = Vec3::Zero();
    for (int i = 0; i < 16; ++i) {
        rgb.x() += basis[i] * sh[3 * i + 0];
        rgb.y() += basis[i] * sh[3 * i + 1];
        rgb.z() += basis[i] * sh[3 * i + 2];
    }
    return rgb;
}

double ray_gaussian_argmax(const Vec3& mu, const Mat3& sigma_inv, const Vec3& o, const Vec3& v) {
    double denom = v.dot(sigma_inv * v);
    return (mu - o).dot(sigma_inv * v) / denom;
}

double ray_gaussian_argmax_cov(const Vec3& mu, const Mat3& sigma, const Vec3& o, const Vec3& v) {
    return ray_gaussian_argmax(mu, inverse_psd_clamped(sigma), o, v);
}

double ray_gaussian_value(const Vec3& mu, const Mat3& sigma_inv, const Vec3& o, const Vec3& v,
                          double tau) {
    Vec3 d = o + tau * v - mu;
    return std::exp(-0.5 * d.dot(sigma_inv * d));
}

} // namespace gsp
