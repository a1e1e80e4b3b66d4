#pragma once

#include "gsp/core/types.hpp"

#include <optional>

namespace gsp {

// Schlick approximation of the Fresnel reflectance at a dielectric
// interface. cos_theta is the cosine of the incident angle in [0,1].
//   F0 = ((eta1 - eta2) / (eta1 + eta2))^2
//   F  = F0 + (1 - F0)(1 - cos_theta)^5
double fresnel_schlick(double cos_theta, double eta_outside, double eta_inside);

// Mirror reflection, omega_in pointing away from the surface
// (omega_in . n > 0): omega_r = 2 (omega_in . n) n - omega_in.
Vec3 reflect(const Vec3& omega_in, const Vec3& n);

// Snell refraction. omega_in points away from the surface on the side of
// n; eta_ratio = eta_incident / eta_transmitted. Returns nullopt on total
// internal reflection. The transmitted direction points into the opposite
// half space.
std::optional<Vec3> refract(const Vec3& omega_in, const Vec3& n, double eta_ratio);

} // namespace gsp
