#pragma once

#include "gsp/core/types.hpp"

#include <cstdint>

namespace gsp {

// splitmix64: tiny, seedable, bit-stable across platforms. Scene synthesis
// and test fixtures depend on byte-identical streams, which the standard
// distributions do not guarantee.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    uint32_t uniform_u32(uint32_t n) { return static_cast<uint32_t>(next_u64() % n); }

    Vec3 unit_vector() {
        double z = uniform(-1.0, 1.0);
        double phi = uniform(0.0, 2.0 * kPi);
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        return Vec3(r * std::cos(phi), r * std::sin(phi), z);
    }

    Quat unit_quaternion() {
        // Shoemake's uniform quaternion sampling.
        double u1 = uniform(), u2 = uniform(), u3 = uniform();
        double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
        return Quat(a * std::sin(2 * kPi * u2), a * std::cos(2 * kPi * u2),
                    b * std::sin(2 * kPi * u3), b * std::cos(2 * kPi * u3))
            .normalized();
    }

  private:
    uint64_t state_;
};

} // namespace gsp
