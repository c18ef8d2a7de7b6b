#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "amtapc/core.hpp"
#include "amtapc/style.hpp"

namespace amtapc {

// Encoder hidden states, T x F x Z.
struct HiddenGrid {
    int t_len = 0, f_len = 0, z = 0;
    std::vector<double> a;

    HiddenGrid() = default;
    HiddenGrid(int t, int f, int zdim, double fill = 0.0)
        : t_len(t), f_len(f), z(zdim), a(static_cast<size_t>(t) * f * zdim, fill) {}

    double* cell(int t, int f) { return a.data() + (static_cast<size_t>(t) * f_len + f) * z; }
    const double* cell(int t, int f) const {
        return a.data() + (static_cast<size_t>(t) * f_len + f) * z;
    }
    int n_cells() const { return t_len * f_len; }
};

// Style projection (W, b) plus the two-layer gate network.
struct InjectionParams {
    Mat W;                       // Z x 24
    std::vector<double> b;       // Z
    Mat gate_w1;                 // G x Z
    std::vector<double> gate_b1; // G
    Mat gate_w2;                 // Z x G
    std::vector<double> gate_b2; // Z

    int z() const { return W.nr; }
    int g() const { return gate_w1.nr; }
};

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], deterministic from seed.
inline InjectionParams init_injection_params(int z, int g, uint64_t seed) {
    Rng rng(seed);
    auto fill = [&](std::vector<double>& v, int fan_in) {
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& x : v) x = rng.uniform_range(-bound, bound);
    };
    InjectionParams p;
    p.W = Mat(z, 24);
    p.b.assign(z, 0.0);
    p.gate_w1 = Mat(g, z);
    p.gate_b1.assign(g, 0.0);
    p.gate_w2 = Mat(z, g);
    p.gate_b2.assign(z, 0.0);
    fill(p.W.a, 24);
    fill(p.b, 24);
    fill(p.gate_w1.a, z);
    fill(p.gate_b1, z);
    fill(p.gate_w2.a, g);
    fill(p.gate_b2, g);
    return p;
}

struct InjectionCache {
    HiddenGrid input;
    std::array<double, 24> style{};
    std::vector<double> h_sv;     // Z
    std::vector<double> gate_pre; // cells x G, pre-ReLU
    std::vector<double> gate_act; // cells x G, post-ReLU
    std::vector<double> r;        // cells x Z, sigmoid outputs
};

struct InjectionGrads {
    Mat dW;
    std::vector<double> db;
    Mat dgate_w1;
    std::vector<double> dgate_b1;
    Mat dgate_w2;
    std::vector<double> dgate_b2;
    HiddenGrid dinput;
    std::array<double, 24> dstyle{};
};

namespace detail {
inline void check_dim(int got, int want, const char* name) {
    if (got != want)
        throw std::runtime_error(std::string("injection: dimension mismatch for ") + name +
                                 ": got " + std::to_string(got) + ", want " +
                                 std::to_string(want));
}
} // namespace detail

// h_sv = W v + b;  r = sigmoid(gate_w2 relu(gate_w1 h + gate_b1) + gate_b2);
// out = r * h + (1 - r) * h_sv, elementwise per (t, f) cell.
inline HiddenGrid inject_forward(const InjectionParams& p, const HiddenGrid& grid,
                                 const StyleVector& style, InjectionCache* cache = nullptr) {
    const int z = p.z(), g = p.g();
    detail::check_dim(grid.z, z, "hidden width Z");
    detail::check_dim(p.W.nc, 24, "style input of W");
    detail::check_dim(p.gate_w1.nc, z, "gate_w1 columns");
    detail::check_dim(p.gate_w2.nr, z, "gate_w2 rows");
    detail::check_dim(p.gate_w2.nc, g, "gate_w2 columns");
    detail::check_dim(static_cast<int>(p.b.size()), z, "b");
    detail::check_dim(static_cast<int>(p.gate_b1.size()), g, "gate_b1");
    detail::check_dim(static_cast<int>(p.gate_b2.size()), z, "gate_b2");

    std::vector<double> h_sv(z);
    for (int i = 0; i < z; ++i) {
        double acc = p.b[i];
        const double* w = p.W.row(i);
        for (int j = 0; j < 24; ++j) acc += w[j] * style.values[j];
        h_sv[i] = acc;
    }

    const int cells = grid.n_cells();
    HiddenGrid out(grid.t_len, grid.f_len, z);
    if (cache) {
        cache->input = grid;
        cache->style = style.values;
        cache->h_sv = h_sv;
        cache->gate_pre.resize(static_cast<size_t>(cells) * g);
        cache->gate_act.resize(static_cast<size_t>(cells) * g);
        cache->r.resize(static_cast<size_t>(cells) * z);
    }

    std::vector<double> u(g), act(g);
    for (int c = 0; c < cells; ++c) {
        const double* h = grid.a.data() + static_cast<size_t>(c) * z;
        double* o = out.a.data() + static_cast<size_t>(c) * z;
        for (int i = 0; i < g; ++i) {
            double acc = p.gate_b1[i];
            const double* w = p.gate_w1.row(i);
            for (int j = 0; j < z; ++j) acc += w[j] * h[j];
            u[i] = acc;
            act[i] = relu(acc);
        }
        for (int i = 0; i < z; ++i) {
            double acc = p.gate_b2[i];
            const double* w = p.gate_w2.row(i);
            for (int j = 0; j < g; ++j) acc += w[j] * act[j];
            double r = sigmoid(acc);
            o[i] = r * h[i] + (1.0 - r) * h_sv[i];
            if (cache) cache->r[static_cast<size_t>(c) * z + i] = r;
        }
        if (cache) {
            std::copy(u.begin(), u.end(), cache->gate_pre.begin() + static_cast<size_t>(c) * g);
            std::copy(act.begin(), act.end(),
                      cache->gate_act.begin() + static_cast<size_t>(c) * g);
        }
    }
    return out;
}

// Exact gradients of sum(upstream * output) w.r.t. every parameter, the
// input grid, and the style vector.
inline InjectionGrads inject_backward(const InjectionParams& p, const InjectionCache& cache,
                                      const HiddenGrid& upstream) {
    const int z = p.z(), g = p.g();
    const HiddenGrid& grid = cache.input;
    detail::check_dim(upstream.t_len, grid.t_len, "upstream T");
    detail::check_dim(upstream.f_len, grid.f_len, "upstream F");
    detail::check_dim(upstream.z, z, "upstream Z");

    InjectionGrads gr;
    gr.dW = Mat(z, 24);
    gr.db.assign(z, 0.0);
    gr.dgate_w1 = Mat(g, z);
    gr.dgate_b1.assign(g, 0.0);
    gr.dgate_w2 = Mat(z, g);
    gr.dgate_b2.assign(z, 0.0);
    gr.dinput = HiddenGrid(grid.t_len, grid.f_len, z);

    std::vector<double> dh_sv(z, 0.0);
    std::vector<double> dz_vec(z), da(g), du(g);

    const int cells = grid.n_cells();
    for (int c = 0; c < cells; ++c) {
        const double* h = grid.a.data() + static_cast<size_t>(c) * z;
        const double* gup = upstream.a.data() + static_cast<size_t>(c) * z;
        const double* r = cache.r.data() + static_cast<size_t>(c) * z;
        const double* act = cache.gate_act.data() + static_cast<size_t>(c) * g;
        const double* pre = cache.gate_pre.data() + static_cast<size_t>(c) * g;
        double* dx = gr.dinput.a.data() + static_cast<size_t>(c) * z;

        // through the convex combination and the sigmoid
        for (int i = 0; i < z; ++i) {
            double gi = gup[i];
            dx[i] = gi * r[i];
            dh_sv[i] += gi * (1.0 - r[i]);
            double dr = gi * (h[i] - cache.h_sv[i]);
            dz_vec[i] = dr * r[i] * (1.0 - r[i]);
        }
        // gate second layer
        std::fill(da.begin(), da.end(), 0.0);
        for (int i = 0; i < z; ++i) {
            double d = dz_vec[i];
            gr.dgate_b2[i] += d;
            double* dw = gr.dgate_w2.row(i);
            const double* w = p.gate_w2.row(i);
            for (int j = 0; j < g; ++j) {
                dw[j] += d * act[j];
                da[j] += w[j] * d;
            }
        }
        // ReLU and gate first layer
        for (int i = 0; i < g; ++i) du[i] = pre[i] > 0.0 ? da[i] : 0.0;
        for (int i = 0; i < g; ++i) {
            double d = du[i];
            if (d == 0.0) continue;
            gr.dgate_b1[i] += d;
            double* dw = gr.dgate_w1.row(i);
            const double* w = p.gate_w1.row(i);
            for (int j = 0; j < z; ++j) {
                dw[j] += d * h[j];
                dx[j] += w[j] * d;
            }
        }
    }

    // style projection
    for (int i = 0; i < z; ++i) {
        gr.db[i] = dh_sv[i];
        double* dw = gr.dW.row(i);
        for (int j = 0; j < 24; ++j) {
            dw[j] = dh_sv[i] * cache.style[j];
            gr.dstyle[j] += p.W.at(i, j) * dh_sv[i];
        }
    }
    return gr;
}

} // namespace amtapc
