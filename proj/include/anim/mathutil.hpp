#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace anim {

inline Eigen::Matrix3d rot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Eigen::Matrix3d m;
    m << 1, 0, 0,
         0, c, -s,
         0, s, c;
    return m;
}

inline Eigen::Matrix3d rot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Eigen::Matrix3d m;
    m << c, 0, s,
         0, 1, 0,
        -s, 0, c;
    return m;
}

inline Eigen::Matrix3d rot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Eigen::Matrix3d m;
    m << c, -s, 0,
         s, c, 0,
         0, 0, 1;
    return m;
}

// Intrinsic XYZ convention used for all joint rotations: R = Rx * Ry * Rz.
inline Eigen::Matrix3d euler_xyz_to_matrix(double ax, double ay, double az) {
    return rot_x(ax) * rot_y(ay) * rot_z(az);
}

// Inverse of euler_xyz_to_matrix. Near the gimbal singularity (|R02| ~ 1)
// the x/z split is not unique; z is pinned to zero there.
inline Eigen::Vector3d matrix_to_euler_xyz(const Eigen::Matrix3d& r) {
    Eigen::Vector3d e;
    const double sy = r(0, 2);
    if (std::abs(sy) < 1.0 - 1e-9) {
        e[0] = std::atan2(-r(1, 2), r(2, 2));
        e[1] = std::asin(sy);
        e[2] = std::atan2(-r(0, 1), r(0, 0));
    } else {
        e[0] = std::atan2(r(2, 1), r(1, 1));
        e[1] = (sy > 0) ? M_PI / 2 : -M_PI / 2;
        e[2] = 0.0;
    }
    return e;
}

// Derives an independent stream seed from a root seed and a tag. FNV-1a over
// the tag mixed into the root through splitmix64.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
    std::uint64_t h = 14695981039346656037ull;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    std::uint64_t z = root ^ h;
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic random source. Standard-library distributions are
// implementation-defined, so every draw here is built directly on the
// mt19937_64 output sequence, which the standard pins down exactly.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t bits() { return gen_(); }

    // Uniform on [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform on {0, ..., n-1} by rejection to avoid modulo bias.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller (no caching so the stream layout stays
    // one draw = two uniforms).
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Gamma(shape, 1) for shape >= 1, Marsaglia-Tsang squeeze method.
    double gamma(double shape) {
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = 1.0 - uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    // Beta(a, b) for a, b >= 1 via two gammas.
    double beta(double a, double b) {
        const double x = gamma(a);
        const double y = gamma(b);
        return x / (x + y);
    }

private:
    std::mt19937_64 gen_;
};

} // namespace anim
