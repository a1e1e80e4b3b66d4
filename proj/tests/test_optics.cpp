#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gsp/core/rng.hpp"
#include "gsp/shade/optics.hpp"

using namespace gsp;

TEST_CASE("fresnel_schlick anchors") {
    // Air to glass at normal incidence: F0 = ((1-1.5)/(1+1.5))^2 = 0.04.
    CHECK(fresnel_schlick(1.0, 1.0, 1.5) == doctest::Approx(0.04));
    // Grazing limit.
    CHECK(fresnel_schlick(0.0, 1.0, 1.5) == doctest::Approx(1.0));
    // 45 degrees: 0.04 + 0.96 (1 - cos45)^5.
    double c = std::cos(kPi / 4.0);
    double expected = 0.04 + 0.96 * std::pow(1.0 - c, 5.0);
    CHECK(fresnel_schlick(c, 1.0, 1.5) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(expected == doctest::Approx(0.0421).epsilon(0.01));
    // F stays within [F0, 1].
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        double f = fresnel_schlick(rng.uniform(), 1.0, 1.5);
        CHECK(f >= 0.04 - 1e-12);
        CHECK(f <= 1.0 + 1e-12);
    }
}

TEST_CASE("reflect geometry") {
    Vec3 n(0, 0, 1);
    // Retroreflection at normal incidence.
    CHECK((reflect(n, n) - n).norm() < 1e-15);
    // 45 degrees in the x-z plane mirrors the x component.
    Vec3 win = Vec3(1, 0, 1).normalized();
    Vec3 wr = reflect(win, n);
    CHECK((wr - Vec3(-win.x(), 0, win.z())).norm() < 1e-12);
    // Angle equality on random inputs.
    Rng rng(2);
    for (int i = 0; i < 500; ++i) {
        Vec3 nn = rng.unit_vector();
        Vec3 w = rng.unit_vector();
        if (w.dot(nn) < 0)
            w = -w;
        Vec3 r = reflect(w, nn);
        CHECK(std::abs(r.norm() - 1.0) < 1e-12);
        CHECK(std::abs(r.dot(nn) - w.dot(nn)) < 1e-9);
    }
}

TEST_CASE("refract anchors") {
    Vec3 n(0, 0, 1);
    // Index match transmits straight through.
    Vec3 win = Vec3(0.3, -0.2, 0.93).normalized();
    auto wt = refract(win, n, 1.0);
    REQUIRE(wt.has_value());
    CHECK((*wt + win).norm() < 1e-12);

    // 45 degrees air->glass bends to arcsin(sin45 / 1.5).
    Vec3 w45 = Vec3(1, 0, 1).normalized();
    auto t = refract(w45, n, 1.0 / 1.5);
    REQUIRE(t.has_value());
    double angle = std::acos(std::clamp(-t->z(), -1.0, 1.0));
    CHECK(angle == doctest::Approx(std::asin(std::sin(kPi / 4.0) / 1.5)).epsilon(1e-9));
    CHECK(angle == doctest::Approx(28.13 * kPi / 180.0).epsilon(1e-3));

    // Inside glass beyond the critical angle arcsin(1/1.5): TIR.
    double critical = std::asin(1.0 / 1.5);
    Vec3 wc(std::sin(critical + 0.01), 0, std::cos(critical + 0.01));
    CHECK(!refract(wc, n, 1.5).has_value());
    Vec3 wo(std::sin(critical - 0.01), 0, std::cos(critical - 0.01));
    CHECK(refract(wo, n, 1.5).has_value());
}

TEST_CASE("snell's law and reciprocity on random interfaces") {
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        Vec3 n = rng.unit_vector();
        Vec3 w = rng.unit_vector();
        if (w.dot(n) < 0)
            w = -w;
        double eta_ratio = rng.uniform(0.4, 2.5);
        auto t = refract(w, n, eta_ratio);
        if (!t)
            continue;
        CHECK(std::abs(t->norm() - 1.0) < 1e-12);
        // Transmitted ray is on the opposite side.
        CHECK(t->dot(n) <= 0.0);
        // eta_i sin(theta_i) = eta_t sin(theta_t) with eta_ratio = eta_i/eta_t.
        double sin_i = w.cross(n).norm();
        double sin_t = t->cross(n).norm();
        CHECK(eta_ratio * sin_i == doctest::Approx(sin_t).epsilon(1e-9));
        // Re-refracting through a parallel interface with the reciprocal
        // ratio recovers -w (slab identity).
        auto back = refract(-*t, n, 1.0 / eta_ratio);
        REQUIRE(back.has_value());
        CHECK((*back - (-w)).norm() < 1e-9);
    }
}
