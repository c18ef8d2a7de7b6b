#include "amtapc/inject.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

using namespace amtapc;

namespace {

HiddenGrid random_grid(Rng& rng, int t, int f, int z) {
    HiddenGrid g(t, f, z);
    for (auto& x : g.a) x = rng.uniform_range(-2.0, 2.0);
    return g;
}

StyleVector random_style(Rng& rng) {
    StyleVector s;
    for (auto& x : s.values) x = rng.uniform();
    return s;
}

// scalar objective sum(upstream * forward(...)) used by the finite-difference
// oracle below
double objective(const InjectionParams& p, const HiddenGrid& grid, const StyleVector& s,
                 const HiddenGrid& upstream) {
    HiddenGrid out = inject_forward(p, grid, s);
    double acc = 0.0;
    for (size_t i = 0; i < out.a.size(); ++i) acc += upstream.a[i] * out.a[i];
    return acc;
}

struct FdReport {
    double worst_rel = 0.0;
    int checked = 0;
};

void fd_check(std::vector<double>& params_vec, const std::vector<double>& analytic,
              const std::function<double()>& eval, FdReport& report) {
    const double h = 1e-4;
    for (size_t i = 0; i < params_vec.size(); ++i) {
        double saved = params_vec[i];
        params_vec[i] = saved + h;
        double up = eval();
        params_vec[i] = saved - h;
        double dn = eval();
        params_vec[i] = saved;
        double numeric = (up - dn) / (2.0 * h);
        double scale = std::max({1e-6, std::abs(numeric), std::abs(analytic[i])});
        report.worst_rel = std::max(report.worst_rel, std::abs(numeric - analytic[i]) / scale);
        ++report.checked;
    }
}

} // namespace

TEST_CASE("gate forced to 1 passes the input through", "[inject]") {
    Rng rng(3);
    InjectionParams p = init_injection_params(4, 3, 11);
    std::fill(p.gate_w2.a.begin(), p.gate_w2.a.end(), 0.0);
    std::fill(p.gate_b2.begin(), p.gate_b2.end(), 20.0);
    HiddenGrid g = random_grid(rng, 3, 2, 4);
    HiddenGrid out = inject_forward(p, g, random_style(rng));
    for (size_t i = 0; i < g.a.size(); ++i)
        CHECK(out.a[i] == Catch::Approx(g.a[i]).margin(1e-7));
}

TEST_CASE("gate forced to 0 replaces every cell with the style state", "[inject]") {
    Rng rng(4);
    InjectionParams p = init_injection_params(4, 3, 12);
    std::fill(p.gate_w2.a.begin(), p.gate_w2.a.end(), 0.0);
    std::fill(p.gate_b2.begin(), p.gate_b2.end(), -20.0);
    HiddenGrid g = random_grid(rng, 3, 2, 4);
    StyleVector s = random_style(rng);
    HiddenGrid out = inject_forward(p, g, s);

    // h_sv computed independently
    for (int i = 0; i < 4; ++i) {
        double want = p.b[i];
        for (int j = 0; j < 24; ++j) want += p.W.at(i, j) * s.values[j];
        for (int c = 0; c < g.n_cells(); ++c)
            CHECK(out.a[static_cast<size_t>(c) * 4 + i] == Catch::Approx(want).margin(1e-7));
    }
}

TEST_CASE("hand-computed Z=2 instance matches to 1e-12", "[inject][oracle]") {
    // h = (1, 2); h_sv = (0.5, -0.5); first gate row yields r0 = sigmoid(ln 3)
    // = 0.75, second r1 = sigmoid(0) = 0.5. Expected output: 0.875 and 0.75.
    InjectionParams p;
    p.W = Mat(2, 24);
    p.W.at(0, 0) = 1.0;
    p.W.at(1, 1) = -1.0;
    p.b = {0.25, 0.25};
    p.gate_w1 = Mat(2, 2);
    p.gate_w1.at(0, 0) = 1.0;
    p.gate_w1.at(1, 1) = 1.0;
    p.gate_b1 = {-0.5, -3.0};
    p.gate_w2 = Mat(2, 2);
    p.gate_w2.at(0, 0) = 2.0 * std::log(3.0);
    p.gate_w2.at(0, 1) = 7.0;
    p.gate_b2 = {0.0, 0.0};

    StyleVector s;
    s.values[0] = 0.25;
    s.values[1] = 0.75;

    HiddenGrid g(1, 1, 2);
    g.a = {1.0, 2.0};
    HiddenGrid out = inject_forward(p, g, s);
    CHECK(out.a[0] == Catch::Approx(0.875).margin(1e-12));
    CHECK(out.a[1] == Catch::Approx(0.75).margin(1e-12));
}

TEST_CASE("output is a per-coordinate convex combination", "[inject][property]") {
    Rng rng(9);
    InjectionParams p = init_injection_params(8, 8, 21);
    HiddenGrid g = random_grid(rng, 25, 5, 8); // 1000 cells
    StyleVector s = random_style(rng);
    InjectionCache cache;
    HiddenGrid out = inject_forward(p, g, s, &cache);
    for (int c = 0; c < g.n_cells(); ++c) {
        for (int i = 0; i < 8; ++i) {
            size_t idx = static_cast<size_t>(c) * 8 + i;
            double lo = std::min(g.a[idx], cache.h_sv[i]);
            double hi = std::max(g.a[idx], cache.h_sv[i]);
            CHECK(out.a[idx] >= lo - 1e-12);
            CHECK(out.a[idx] <= hi + 1e-12);
            CHECK(cache.r[idx] > 0.0);
            CHECK(cache.r[idx] < 1.0);
        }
    }
}

TEST_CASE("analytic gradients match central differences", "[inject][oracle]") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        InjectionParams p = init_injection_params(4, 3, seed * 101);
        HiddenGrid grid = random_grid(rng, 3, 2, 4);
        StyleVector style = random_style(rng);
        HiddenGrid upstream = random_grid(rng, 3, 2, 4);

        InjectionCache cache;
        inject_forward(p, grid, style, &cache);
        InjectionGrads gr = inject_backward(p, cache, upstream);

        auto eval = [&]() { return objective(p, grid, style, upstream); };
        FdReport report;
        fd_check(p.W.a, gr.dW.a, eval, report);
        fd_check(p.b, gr.db, eval, report);
        fd_check(p.gate_w1.a, gr.dgate_w1.a, eval, report);
        fd_check(p.gate_b1, gr.dgate_b1, eval, report);
        fd_check(p.gate_w2.a, gr.dgate_w2.a, eval, report);
        fd_check(p.gate_b2, gr.dgate_b2, eval, report);
        fd_check(grid.a, gr.dinput.a, eval, report);
        {
            std::vector<double> sv(style.values.begin(), style.values.end());
            std::vector<double> dsv(gr.dstyle.begin(), gr.dstyle.end());
            const double h = 1e-4;
            for (int i = 0; i < 24; ++i) {
                double saved = style.values[i];
                style.values[i] = saved + h;
                double up = eval();
                style.values[i] = saved - h;
                double dn = eval();
                style.values[i] = saved;
                double numeric = (up - dn) / (2.0 * h);
                double scale = std::max({1e-6, std::abs(numeric), std::abs(dsv[i])});
                report.worst_rel = std::max(report.worst_rel, std::abs(numeric - dsv[i]) / scale);
            }
            (void)sv;
        }
        INFO("seed " << seed << " worst relative error " << report.worst_rel);
        CHECK(report.worst_rel < 1e-4);
    }
}

TEST_CASE("forced gate zeroes the style projection gradient", "[inject]") {
    Rng rng(6);
    InjectionParams p = init_injection_params(4, 3, 31);
    std::fill(p.gate_w2.a.begin(), p.gate_w2.a.end(), 0.0);
    std::fill(p.gate_b2.begin(), p.gate_b2.end(), 40.0); // r = 1 to double precision
    HiddenGrid g = random_grid(rng, 2, 2, 4);
    InjectionCache cache;
    inject_forward(p, g, random_style(rng), &cache);
    InjectionGrads gr = inject_backward(p, cache, random_grid(rng, 2, 2, 4));
    for (double x : gr.dW.a) CHECK(x == Catch::Approx(0.0).margin(1e-12));
    for (double x : gr.db) CHECK(x == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("zero upstream gives zero gradients", "[inject]") {
    Rng rng(8);
    InjectionParams p = init_injection_params(4, 3, 33);
    HiddenGrid g = random_grid(rng, 2, 2, 4);
    InjectionCache cache;
    inject_forward(p, g, random_style(rng), &cache);
    InjectionGrads gr = inject_backward(p, cache, HiddenGrid(2, 2, 4));
    for (double x : gr.dW.a) CHECK(x == 0.0);
    for (double x : gr.dgate_w1.a) CHECK(x == 0.0);
    for (double x : gr.dinput.a) CHECK(x == 0.0);
}

TEST_CASE("shape mismatches name the offending dimension", "[inject]") {
    InjectionParams p = init_injection_params(4, 3, 1);
    HiddenGrid wrong(2, 2, 5);
    StyleVector s;
    REQUIRE_THROWS_WITH(inject_forward(p, wrong, s),
                        Catch::Matchers::ContainsSubstring("hidden width Z"));
}
