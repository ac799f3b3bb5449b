#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "msfm/types.hpp"

namespace msfm {

// Deterministic RNG. Distributions are hand-rolled on top of mt19937_64 so
// that streams are byte-stable across standard library versions.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    // [0, 1) with 53-bit resolution
    double uniform() { return (eng_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // Box-Muller with cached spare
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * kPi * u2;
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return r * std::cos(th);
    }

    double normal(double stddev) { return stddev * normal(); }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        const int n = hi - lo + 1;
        int k = static_cast<int>(uniform() * n);
        if (k >= n) k = n - 1;
        return lo + k;
    }

    Vec3 unit_vector() {
        const double z = uniform(-1.0, 1.0);
        const double phi = uniform(0.0, 2.0 * kPi);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        return Vec3(r * std::cos(phi), r * std::sin(phi), z);
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0;
};

}  // namespace msfm
