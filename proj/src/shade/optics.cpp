#include "gsp/shade/optics.hpp"

#include <cmath>

namespace gsp {

double fresnel_schlick(double cos_theta, double eta_outside, double eta_inside) {
    double r = (eta_outside - eta_inside) / (eta_outside + eta_inside);
    double f0 = r * r;
    double m = 1.0 - std::clamp(cos_theta, 0.0, 1.0);
    double m2 = m * m;
    return f0 + (1.0 - f0) * m2 * m2 * m;
}

Vec3 reflect(const Vec3& omega_in, const Vec3& n) {
    return 2.0 * omega_in.dot(n) * n - omega_in;
}

std::optional<Vec3> refract(const Vec3& omega_in, const Vec3& n, double eta_ratio) {
    double cos_i = omega_in.dot(n);
    double sin2_t = eta_ratio * eta_ratio * std::max(0.0, 1.0 - cos_i * cos_i);
    if (sin2_t > 1.0)
        return std::nullopt; // total internal reflection
    double cos_t = std::sqrt(1.0 - sin2_t);
    return Vec3(-eta_ratio * omega_in + (eta_ratio * cos_i - cos_t) * n);
}

} // namespace gsp
