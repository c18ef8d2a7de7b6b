#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "amtapc/core.hpp"
#include "amtapc/roll.hpp"

namespace amtapc {

struct LossConfig {
    double beta = 0.75;
    double theta_onset = 0.07;
    double theta_frame = 0.2;
    double theta_velocity = 0.01;
    uint64_t rng_seed = 0;
};

enum class MatrixKind { Onset, Frame, Velocity };

// Per-matrix boolean selection over T x 88 cells.
struct SelectionMask {
    int t_len = 0;
    std::vector<uint8_t> onsets, frames, velocities;

    const std::vector<uint8_t>& of(MatrixKind kind) const {
        switch (kind) {
        case MatrixKind::Onset: return onsets;
        case MatrixKind::Frame: return frames;
        default: return velocities;
        }
    }
    size_t count(MatrixKind kind) const {
        const auto& m = of(kind);
        size_t c = 0;
        for (uint8_t b : m) c += b;
        return c;
    }
};

// Selects every cell with non-zero ground truth, its pitch neighbors, and
// each remaining cell independently with the matrix's theta. One draw per
// remaining cell in row-major order, onsets then frames then velocities, so
// the mask is a pure function of (truth, rng_seed).
inline SelectionMask build_mask(const PianoRollTensors& truth, const LossConfig& config) {
    const int t_len = truth.n_frames();
    const size_t cells = static_cast<size_t>(t_len) * kNumPitches;
    SelectionMask mask;
    mask.t_len = t_len;
    Rng rng(config.rng_seed);

    auto build = [&](std::vector<uint8_t>& m, auto&& nonzero, double theta) {
        m.assign(cells, 0);
        for (int t = 0; t < t_len; ++t) {
            for (int p = 0; p < kNumPitches; ++p) {
                if (!nonzero(t, p)) continue;
                size_t base = static_cast<size_t>(t) * kNumPitches;
                m[base + p] = 1;
                if (p > 0) m[base + p - 1] = 1;
                if (p + 1 < kNumPitches) m[base + p + 1] = 1;
            }
        }
        for (size_t i = 0; i < cells; ++i) {
            if (m[i]) continue;
            if (rng.uniform() < theta) m[i] = 1;
        }
    };

    build(mask.onsets, [&](int t, int p) { return truth.onsets.at(t, p) != 0.0; },
          config.theta_onset);
    build(mask.frames, [&](int t, int p) { return truth.frames.at(t, p) != 0.0; },
          config.theta_frame);
    build(mask.velocities, [&](int t, int p) { return truth.velocity_class(t, p) != 0; },
          config.theta_velocity);
    return mask;
}

struct MatrixLossResult {
    double value = 0.0;
    size_t masked_cells = 0;
    bool empty_mask = false;
};

inline constexpr double kPredClampEps = 1e-7;

// Mean cross-entropy over the masked cells only. Onset/frame use binary
// cross-entropy against the (possibly soft) target; velocity uses the
// negative log probability of the one-hot class.
inline MatrixLossResult matrix_loss(const PianoRollTensors& pred, const PianoRollTensors& truth,
                                    const SelectionMask& mask, MatrixKind kind) {
    const int t_len = truth.n_frames();
    const auto& m = mask.of(kind);
    MatrixLossResult out;
    double acc = 0.0;
    for (int t = 0; t < t_len; ++t) {
        size_t base = static_cast<size_t>(t) * kNumPitches;
        for (int p = 0; p < kNumPitches; ++p) {
            if (!m[base + p]) continue;
            ++out.masked_cells;
            if (kind == MatrixKind::Velocity) {
                int klass = truth.velocity_class(t, p);
                double q = std::clamp(pred.velocity_prob(t, p, klass), kPredClampEps,
                                      1.0 - kPredClampEps);
                acc += -std::log(q);
            } else {
                const Mat& pm = kind == MatrixKind::Onset ? pred.onsets : pred.frames;
                const Mat& tm = kind == MatrixKind::Onset ? truth.onsets : truth.frames;
                double y = tm.at(t, p);
                double q = std::clamp(pm.at(t, p), kPredClampEps, 1.0 - kPredClampEps);
                acc += -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
            }
        }
    }
    if (out.masked_cells == 0) {
        out.empty_mask = true;
        out.value = 0.0;
    } else {
        out.value = acc / static_cast<double>(out.masked_cells);
    }
    return out;
}

struct HierarchyLoss {
    double onset = 0.0, frame = 0.0, velocity = 0.0;
    double total() const { return (onset + frame + velocity) / 3.0; }
};

struct LossBreakdown {
    double total = 0.0;
    double l1 = 0.0, l2 = 0.0;
    HierarchyLoss h1, h2;
    size_t masked_onsets = 0, masked_frames = 0, masked_velocities = 0;
    bool empty_mask_warning = false;
};

// L_h = (onset + frame + velocity) / 3 per hierarchy; L = beta L1 + (1-beta) L2.
// Both hierarchies share one mask built from the truth.
inline LossBreakdown total_loss(const PianoRollTensors& pred_h1, const PianoRollTensors& pred_h2,
                                const PianoRollTensors& truth, const LossConfig& config) {
    SelectionMask mask = build_mask(truth, config);
    LossBreakdown out;
    auto eval = [&](const PianoRollTensors& pred, HierarchyLoss& h) {
        auto o = matrix_loss(pred, truth, mask, MatrixKind::Onset);
        auto f = matrix_loss(pred, truth, mask, MatrixKind::Frame);
        auto v = matrix_loss(pred, truth, mask, MatrixKind::Velocity);
        h.onset = o.value;
        h.frame = f.value;
        h.velocity = v.value;
        out.empty_mask_warning |= o.empty_mask || f.empty_mask || v.empty_mask;
    };
    eval(pred_h1, out.h1);
    eval(pred_h2, out.h2);
    out.l1 = out.h1.total();
    out.l2 = out.h2.total();
    out.total = config.beta * out.l1 + (1.0 - config.beta) * out.l2;
    out.masked_onsets = mask.count(MatrixKind::Onset);
    out.masked_frames = mask.count(MatrixKind::Frame);
    out.masked_velocities = mask.count(MatrixKind::Velocity);
    return out;
}

} // namespace amtapc
