#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace amtapc {

// Dense row-major matrix of doubles. Small and unfancy on purpose: every
// numeric routine in this project iterates explicitly, so there is no
// expression machinery here.
struct Mat {
    int nr = 0;
    int nc = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int rows, int cols, double fill = 0.0)
        : nr(rows), nc(cols), a(static_cast<size_t>(rows) * cols, fill) {}

    double& at(int r, int c) { return a[static_cast<size_t>(r) * nc + c]; }
    double at(int r, int c) const { return a[static_cast<size_t>(r) * nc + c]; }
    double* row(int r) { return a.data() + static_cast<size_t>(r) * nc; }
    const double* row(int r) const { return a.data() + static_cast<size_t>(r) * nc; }
    size_t size() const { return a.size(); }
    bool empty() const { return a.empty(); }
};

// Rank-3 tensor, row-major with d2 fastest.
struct Tensor3 {
    int d0 = 0, d1 = 0, d2 = 0;
    std::vector<double> a;

    Tensor3() = default;
    Tensor3(int n0, int n1, int n2, double fill = 0.0)
        : d0(n0), d1(n1), d2(n2), a(static_cast<size_t>(n0) * n1 * n2, fill) {}

    double& at(int i, int j, int k) {
        return a[(static_cast<size_t>(i) * d1 + j) * d2 + k];
    }
    double at(int i, int j, int k) const {
        return a[(static_cast<size_t>(i) * d1 + j) * d2 + k];
    }
    double* slab(int i, int j) { return a.data() + (static_cast<size_t>(i) * d1 + j) * d2; }
    const double* slab(int i, int j) const {
        return a.data() + (static_cast<size_t>(i) * d1 + j) * d2;
    }
    size_t size() const { return a.size(); }
    bool empty() const { return a.empty(); }
};

// Deterministic RNG used everywhere a seed appears in a public interface.
// mt19937_64 has a fully specified sequence, and the uniform draws below
// avoid std::uniform_*_distribution so results do not depend on the
// standard library implementation.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    int uniform_int(int n) { return static_cast<int>(gen_() % static_cast<uint64_t>(n)); }

    double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    uint64_t next_u64() { return gen_(); }

private:
    std::mt19937_64 gen_;
};

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

} // namespace amtapc
