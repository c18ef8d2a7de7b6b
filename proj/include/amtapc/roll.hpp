#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "amtapc/core.hpp"
#include "amtapc/midi.hpp"

namespace amtapc {

inline constexpr int kNumPitches = 88;
inline constexpr int kNumVelocityClasses = 128;

struct FrameGrid {
    double hop_seconds = 0.016;
    int frames_per_segment = 512;

    // floor(t / hop), with a one-nanosecond guard so times that are exact
    // frame multiples (MIDI round trips) never land one frame low.
    int frame_index(double seconds) const {
        return static_cast<int>(std::floor(seconds / hop_seconds + 1e-9));
    }
    // Exclusive end frame for a span ending at t: the last frame whose window
    // overlaps the span, plus one. Grid-aligned ends stay exact.
    int frame_end_index(double seconds) const {
        return static_cast<int>(std::ceil(seconds / hop_seconds - 1e-9));
    }
    double frame_time(int frame) const { return frame * hop_seconds; }
};

// Targets / predictions for one segment. Onsets and frames are T x 88.
// Velocities are conceptually T x 88 x 128; ground truth keeps one class
// index per cell (a valid one-hot), predictions keep the full distribution.
struct PianoRollTensors {
    Mat onsets;
    Mat frames;
    std::vector<uint8_t> vel_class; // one-hot form, size T*88 (empty if dense)
    Tensor3 vel_probs;              // dense form, T x 88 x 128 (empty if one-hot)

    int n_frames() const { return onsets.nr; }
    bool velocity_one_hot() const { return !vel_class.empty(); }

    int velocity_class(int t, int p) const {
        if (velocity_one_hot()) return vel_class[static_cast<size_t>(t) * kNumPitches + p];
        const double* row = vel_probs.slab(t, p);
        int best = 0;
        for (int v = 1; v < kNumVelocityClasses; ++v)
            if (row[v] > row[best]) best = v;
        return best;
    }

    double velocity_prob(int t, int p, int v) const {
        if (velocity_one_hot())
            return vel_class[static_cast<size_t>(t) * kNumPitches + p] == v ? 1.0 : 0.0;
        return vel_probs.at(t, p, v);
    }

    static PianoRollTensors zeros(int t_len) {
        PianoRollTensors out;
        out.onsets = Mat(t_len, kNumPitches);
        out.frames = Mat(t_len, kNumPitches);
        out.vel_class.assign(static_cast<size_t>(t_len) * kNumPitches, 0);
        return out;
    }
};

// Builds the segment tensors for frames [segment_start, segment_start + T).
// Soft onset value at distance d from the nearest onset of the same pitch is
// max(0, 1 - d / soft_onset_width). Notes outside the window are excluded.
inline PianoRollTensors notes_to_tensors(const std::vector<MidiNote>& notes, int segment_start,
                                         const FrameGrid& grid, int soft_onset_width = 3) {
    const int t_len = grid.frames_per_segment;
    const int seg_end = segment_start + t_len;
    PianoRollTensors out = PianoRollTensors::zeros(t_len);

    std::vector<MidiNote> sorted = notes;
    std::sort(sorted.begin(), sorted.end(), [](const MidiNote& a, const MidiNote& b) {
        return a.onset_time < b.onset_time;
    });

    for (const auto& n : sorted) {
        const int col = n.pitch - kPitchLow;
        if (col < 0 || col >= kNumPitches) continue;
        const int on_f = grid.frame_index(n.onset_time);
        int off_f = grid.frame_end_index(n.offset_time);
        if (off_f <= on_f) off_f = on_f + 1;

        // frame / velocity cells over [onset, offset), clipped to the window;
        // a later re-strike overwrites the velocity class from its own onset
        for (int t = std::max(on_f, segment_start); t < std::min(off_f, seg_end); ++t) {
            out.frames.at(t - segment_start, col) = 1.0;
            out.vel_class[static_cast<size_t>(t - segment_start) * kNumPitches + col] =
                static_cast<uint8_t>(std::clamp(n.velocity, 1, 127));
        }

        // triangular soft-onset target around the onset frame
        for (int t = std::max(on_f - soft_onset_width + 1, segment_start);
             t <= std::min(on_f + soft_onset_width - 1, seg_end - 1); ++t) {
            double v = 1.0 - static_cast<double>(std::abs(t - on_f)) / soft_onset_width;
            double& cell = out.onsets.at(t - segment_start, col);
            cell = std::max(cell, v);
        }
    }
    return out;
}

// Decodes notes from tensors. A note starts at a local-maximum onset cell
// strictly above the threshold and extends while the frame value stays above
// it; a new onset on the same pitch splits a sustained run. Velocity is the
// argmax class at the onset cell; class 0 suppresses the note. Times are
// local to the segment.
inline std::vector<MidiNote> tensors_to_notes(const PianoRollTensors& tensors,
                                              double onset_threshold, const FrameGrid& grid) {
    const int t_len = tensors.n_frames();
    std::vector<MidiNote> notes;

    for (int p = 0; p < kNumPitches; ++p) {
        std::vector<int> starts;
        for (int t = 0; t < t_len; ++t) {
            double v = tensors.onsets.at(t, p);
            if (v <= onset_threshold) continue;
            double left = t > 0 ? tensors.onsets.at(t - 1, p) : 0.0;
            double right = t + 1 < t_len ? tensors.onsets.at(t + 1, p) : 0.0;
            if (v > left && v >= right) starts.push_back(t);
        }
        for (size_t i = 0; i < starts.size(); ++i) {
            const int t0 = starts[i];
            const int next_start = i + 1 < starts.size() ? starts[i + 1] : t_len;
            int te = t0 + 1;
            while (te < next_start && te < t_len && tensors.frames.at(te, p) > onset_threshold)
                ++te;
            const int vel = tensors.velocity_class(t0, p);
            if (vel == 0) continue;
            MidiNote n;
            n.onset_time = grid.frame_time(t0);
            n.offset_time = grid.frame_time(te);
            n.pitch = p + kPitchLow;
            n.velocity = vel;
            notes.push_back(n);
        }
    }
    std::sort(notes.begin(), notes.end(), [](const MidiNote& a, const MidiNote& b) {
        if (a.onset_time != b.onset_time) return a.onset_time < b.onset_time;
        return a.pitch < b.pitch;
    });
    return notes;
}

} // namespace amtapc
