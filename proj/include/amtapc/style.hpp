#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "amtapc/midi.hpp"
#include "amtapc/roll.hpp"

namespace amtapc {

// Per-cover sample lists behind the style vector: one onset rate per
// 512-frame segment, one velocity and one pitch per note.
struct StyleSamples {
    std::vector<double> onset_rates;
    std::vector<int> velocities;
    std::vector<int> pitches;
};

// 24 values: three 8-bin histogram blocks (onset rate, velocity, pitch).
struct StyleVector {
    std::array<double, 24> values{};

    const double* onset_rate_block() const { return values.data(); }
    const double* velocity_block() const { return values.data() + 8; }
    const double* pitch_block() const { return values.data() + 16; }
};

// The seven quantization edges; eight levels counting the two open tails.
inline constexpr std::array<double, 7> kStyleBinEdges = {-2.0,      -4.0 / 3.0, -2.0 / 3.0, 0.0,
                                                         2.0 / 3.0, 4.0 / 3.0,  2.0};

inline StyleSamples collect_samples(const std::vector<MidiNote>& notes, const FrameGrid& grid) {
    if (notes.empty()) throw std::runtime_error("empty cover");
    StyleSamples s;

    int n_frames = 0;
    for (const auto& n : notes) n_frames = std::max(n_frames, grid.frame_end_index(n.offset_time));
    n_frames = std::max(n_frames, 1);

    const int seg = grid.frames_per_segment;
    const int n_segments = (n_frames + seg - 1) / seg;
    std::vector<int> counts(n_segments, 0);
    for (const auto& n : notes) {
        int f = std::clamp(grid.frame_index(n.onset_time), 0, n_frames - 1);
        ++counts[f / seg];
    }
    s.onset_rates.resize(n_segments);
    for (int i = 0; i < n_segments; ++i) {
        // a trailing partial segment uses its own frame count as denominator
        int seg_frames = i + 1 < n_segments ? seg : n_frames - seg * (n_segments - 1);
        s.onset_rates[i] = static_cast<double>(counts[i]) / seg_frames;
    }

    s.velocities.reserve(notes.size());
    s.pitches.reserve(notes.size());
    for (const auto& n : notes) {
        s.velocities.push_back(n.velocity);
        s.pitches.push_back(n.pitch);
    }
    return s;
}

// The binning stage alone: mass per level for already-normalized values.
// Bin 0 takes x <= -2, bin k takes edge_{k-1} < x <= edge_k, bin 7 takes x > 2.
inline std::array<double, 8> histogram8(const std::vector<double>& values) {
    std::array<double, 8> bins{};
    for (double x : values) {
        // first edge with x <= edge, or 7 for the open upper tail
        int b = 0;
        while (b < 7 && x > kStyleBinEdges[b]) ++b;
        bins[b] += 1.0;
    }
    for (double& b : bins) b /= static_cast<double>(values.size());
    return bins;
}

// Z-scores the samples (population std; a constant list maps to all zeros,
// which falls in bin 3) and histograms them into the eight levels.
template <typename T>
std::array<double, 8> quantize_block(const std::vector<T>& samples) {
    if (samples.empty()) throw std::runtime_error("quantize_block: empty sample list");
    const size_t n = samples.size();
    double mean = 0.0;
    for (T x : samples) mean += static_cast<double>(x);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (T x : samples) {
        double d = static_cast<double>(x) - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    double sd = std::sqrt(var);

    std::vector<double> z(n, 0.0);
    if (sd > 1e-12 * (std::abs(mean) + 1.0)) {
        for (size_t i = 0; i < n; ++i) z[i] = (static_cast<double>(samples[i]) - mean) / sd;
    }
    return histogram8(z);
}

inline StyleVector extract_style_vector(const std::vector<MidiNote>& notes,
                                        const FrameGrid& grid) {
    StyleSamples s = collect_samples(notes, grid);
    StyleVector v;
    auto a = quantize_block(s.onset_rates);
    auto b = quantize_block(s.velocities);
    auto c = quantize_block(s.pitches);
    std::copy(a.begin(), a.end(), v.values.begin());
    std::copy(b.begin(), b.end(), v.values.begin() + 8);
    std::copy(c.begin(), c.end(), v.values.begin() + 16);
    return v;
}

inline StyleVector average_style_vectors(const std::vector<StyleVector>& vs) {
    if (vs.empty()) throw std::runtime_error("average_style_vectors: empty list");
    StyleVector out;
    for (const auto& v : vs)
        for (int i = 0; i < 24; ++i) out.values[i] += v.values[i];
    for (int i = 0; i < 24; ++i) out.values[i] /= static_cast<double>(vs.size());
    return out;
}

} // namespace amtapc
