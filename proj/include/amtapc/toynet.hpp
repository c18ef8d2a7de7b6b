#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "amtapc/core.hpp"
#include "amtapc/inject.hpp"
#include "amtapc/loss.hpp"
#include "amtapc/midi.hpp"
#include "amtapc/roll.hpp"
#include "amtapc/style.hpp"

namespace amtapc {

// Two-hierarchy encoder/decoder stand-in. Each hierarchy is a per-frame
// affine encoder with tanh into a T x F x Z hidden grid and per-(t, f)
// affine heads; each of the F frequency positions owns a contiguous band of
// 88 / F pitches. Style is injected between the first encoder and decoder
// only. Hierarchy 2 consumes hierarchy 1's onset and frame probabilities.
struct ToyNetConfig {
    int t_len = 512;
    int f_len = 4;
    int z = 32;
    int g = 32;
    int f_in = 16;

    int band() const { return kNumPitches / f_len; }
    int enc2_in() const { return 2 * kNumPitches; }

    void validate() const {
        if (kNumPitches % f_len != 0)
            throw std::runtime_error("toynet: f_len must divide 88");
        if (t_len < 1 || z < 1 || g < 1 || f_in < 1)
            throw std::runtime_error("toynet: bad config");
    }
};

struct DecoderHead {
    Mat onset_w; // 88 x Z
    std::vector<double> onset_b;
    Mat frame_w; // 88 x Z
    std::vector<double> frame_b;
    Mat vel_w; // (88*128) x Z
    std::vector<double> vel_b;
};

struct ToyNetParams {
    ToyNetConfig cfg;
    Mat enc1_w; // (F*Z) x F_in
    std::vector<double> enc1_b;
    InjectionParams inject;
    DecoderHead dec1;
    Mat enc2_w; // (F*Z) x 176
    std::vector<double> enc2_b;
    DecoderHead dec2;
};

struct TensorRef {
    std::string name;
    std::vector<uint32_t> dims;
    std::vector<double>* data;
};

// Stable enumeration of every parameter tensor; the order defines the
// checkpoint layout and the Adam state layout.
inline std::vector<TensorRef> tensor_refs(ToyNetParams& p) {
    auto mat = [](const char* name, Mat& m) {
        return TensorRef{name, {static_cast<uint32_t>(m.nr), static_cast<uint32_t>(m.nc)}, &m.a};
    };
    auto vec = [](const char* name, std::vector<double>& v) {
        return TensorRef{name, {static_cast<uint32_t>(v.size())}, &v};
    };
    return {
        mat("enc1_w", p.enc1_w),
        vec("enc1_b", p.enc1_b),
        mat("inject_w", p.inject.W),
        vec("inject_b", p.inject.b),
        mat("inject_gate_w1", p.inject.gate_w1),
        vec("inject_gate_b1", p.inject.gate_b1),
        mat("inject_gate_w2", p.inject.gate_w2),
        vec("inject_gate_b2", p.inject.gate_b2),
        mat("dec1_onset_w", p.dec1.onset_w),
        vec("dec1_onset_b", p.dec1.onset_b),
        mat("dec1_frame_w", p.dec1.frame_w),
        vec("dec1_frame_b", p.dec1.frame_b),
        mat("dec1_vel_w", p.dec1.vel_w),
        vec("dec1_vel_b", p.dec1.vel_b),
        mat("enc2_w", p.enc2_w),
        vec("enc2_b", p.enc2_b),
        mat("dec2_onset_w", p.dec2.onset_w),
        vec("dec2_onset_b", p.dec2.onset_b),
        mat("dec2_frame_w", p.dec2.frame_w),
        vec("dec2_frame_b", p.dec2.frame_b),
        mat("dec2_vel_w", p.dec2.vel_w),
        vec("dec2_vel_b", p.dec2.vel_b),
    };
}

namespace detail {

inline DecoderHead make_head(int z) {
    DecoderHead h;
    h.onset_w = Mat(kNumPitches, z);
    h.onset_b.assign(kNumPitches, 0.0);
    h.frame_w = Mat(kNumPitches, z);
    h.frame_b.assign(kNumPitches, 0.0);
    h.vel_w = Mat(kNumPitches * kNumVelocityClasses, z);
    h.vel_b.assign(static_cast<size_t>(kNumPitches) * kNumVelocityClasses, 0.0);
    return h;
}

inline void uniform_fill(Rng& rng, std::vector<double>& v, int fan_in) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : v) x = rng.uniform_range(-bound, bound);
}

inline void small_fill(Rng& rng, std::vector<double>& v) {
    for (double& x : v) x = rng.uniform_range(-0.02, 0.02);
}

} // namespace detail

inline ToyNetParams zeros_like(const ToyNetParams& src) {
    ToyNetParams p = src;
    for (auto& ref : tensor_refs(p)) std::fill(ref.data->begin(), ref.data->end(), 0.0);
    return p;
}

// Encoders and the injection layer start uniform in +-1/sqrt(fan_in). The
// decoder readout heads start near zero with biases at the class prior
// (silence dominates), so untrained cells open as negatives and the
// gradient mass concentrates on the active cells from the first step.
inline ToyNetParams init_toynet(const ToyNetConfig& cfg, uint64_t seed) {
    cfg.validate();
    ToyNetParams p;
    p.cfg = cfg;
    Rng rng(seed);
    p.enc1_w = Mat(cfg.f_len * cfg.z, cfg.f_in);
    p.enc1_b.assign(static_cast<size_t>(cfg.f_len) * cfg.z, 0.0);
    detail::uniform_fill(rng, p.enc1_w.a, cfg.f_in);
    detail::uniform_fill(rng, p.enc1_b, cfg.f_in);
    p.inject = init_injection_params(cfg.z, cfg.g, rng.next_u64());
    auto head = [&](DecoderHead& h) {
        h = detail::make_head(cfg.z);
        detail::small_fill(rng, h.onset_w.a);
        detail::small_fill(rng, h.frame_w.a);
        detail::small_fill(rng, h.vel_w.a);
        std::fill(h.onset_b.begin(), h.onset_b.end(), -2.5);
        std::fill(h.frame_b.begin(), h.frame_b.end(), -2.5);
        for (int q = 0; q < kNumPitches; ++q) h.vel_b[q * kNumVelocityClasses] = 4.0;
    };
    head(p.dec1);
    p.enc2_w = Mat(cfg.f_len * cfg.z, cfg.enc2_in());
    p.enc2_b.assign(static_cast<size_t>(cfg.f_len) * cfg.z, 0.0);
    detail::uniform_fill(rng, p.enc2_w.a, cfg.enc2_in());
    detail::uniform_fill(rng, p.enc2_b, cfg.enc2_in());
    head(p.dec2);
    return p;
}

// ---------------------------------------------------------------------------
// synthetic data
// ---------------------------------------------------------------------------

struct SyntheticPair {
    Mat features; // T x F_in
    PianoRollTensors target;
    StyleVector style;
    std::vector<MidiNote> original_notes;
    std::vector<MidiNote> cover_notes;
    bool intense = false;
};

// Deterministic toy corpus. Originals are two-voice note sequences over a
// fixed pitch grid; the cover transform scales velocities and, for intense
// pairs, doubles notes an octave up. The pseudo-spectrogram carries a
// sustain level in channels [0, F_in/2) and an attack transient mirroring
// the soft-onset shape in channels [F_in/2, F_in), both as narrow Gaussian
// bumps at the note's pitch position.
inline std::vector<SyntheticPair> gen_synthetic_dataset(int n_pairs, uint64_t seed,
                                                        const ToyNetConfig& cfg = {},
                                                        int soft_onset_width = 3) {
    if (n_pairs < 1) throw std::runtime_error("gen_synthetic_dataset: n_pairs must be >= 1");
    cfg.validate();
    FrameGrid grid;
    grid.frames_per_segment = cfg.t_len; // segment length follows the model window
    const int t_len = cfg.t_len;
    const int half = cfg.f_in / 2;
    if (half < 1) throw std::runtime_error("gen_synthetic_dataset: f_in must be >= 2");

    static constexpr int kVoicePitches[2][4] = {{30, 39, 48, 57}, {66, 75, 84, 93}};
    static constexpr int kVelocityPalette[2] = {50, 75};

    std::vector<SyntheticPair> out;
    out.reserve(n_pairs);
    for (int i = 0; i < n_pairs; ++i) {
        Rng rng(seed + 0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(i + 1));
        SyntheticPair pair;
        pair.intense = i % 2 == 1;

        const double rest_prob = pair.intense ? 0.2 : 0.55;
        const double vel_scale = pair.intense ? 1.25 : 0.65;
        // velocity is a fixed function of the grid pitch (alternating over
        // the palette); the per-pair distribution shape still varies with
        // which pitches the pair happens to use
        auto pitch_velocity = [&](int pitch) { return kVelocityPalette[(pitch / 9) % 2]; };

        const int max_dur = std::max(2, std::min(24, t_len / 2));
        const int min_dur = std::min(8, max_dur);
        const int n_voices = pair.intense ? 2 : 1;
        for (int voice = 0; voice < n_voices; ++voice) {
            int t = rng.uniform_int(8);
            while (t + min_dur + 2 < t_len) {
                int dur = min_dur + rng.uniform_int(max_dur - min_dur + 1);
                if (rng.uniform() < rest_prob) {
                    t += dur;
                    continue;
                }
                int pitch = kVoicePitches[voice][rng.uniform_int(4)];
                if (t + dur > t_len) dur = t_len - t;
                MidiNote n;
                n.onset_time = grid.frame_time(t);
                n.offset_time = grid.frame_time(t + dur);
                n.pitch = pitch;
                n.velocity = pitch_velocity(pitch);
                pair.original_notes.push_back(n);
                t += dur + 1 + rng.uniform_int(6);
            }
        }
        if (pair.original_notes.empty()) {
            MidiNote n;
            n.onset_time = 0.0;
            n.offset_time = grid.frame_time(std::max(2, t_len / 2));
            n.pitch = kVoicePitches[0][rng.uniform_int(4)];
            n.velocity = pitch_velocity(n.pitch);
            pair.original_notes.push_back(n);
        }
        std::sort(pair.original_notes.begin(), pair.original_notes.end(),
                  [](const MidiNote& a, const MidiNote& b) {
                      if (a.onset_time != b.onset_time) return a.onset_time < b.onset_time;
                      return a.pitch < b.pitch;
                  });

        // cover: velocity scaling, octave doubling with probability by style
        const double double_prob = pair.intense ? 1.0 : 0.0;
        for (const auto& n : pair.original_notes) {
            MidiNote c = n;
            c.velocity = std::clamp(static_cast<int>(std::lround(n.velocity * vel_scale)), 1, 127);
            pair.cover_notes.push_back(c);
            if (n.pitch + 12 <= kPitchHigh && rng.uniform() < double_prob) {
                MidiNote d = c;
                d.pitch = n.pitch + 12;
                pair.cover_notes.push_back(d);
            }
        }

        pair.target = notes_to_tensors(pair.cover_notes, 0, grid, soft_onset_width);
        pair.style = extract_style_vector(pair.cover_notes, grid);

        // pseudo-spectrogram from the original notes
        pair.features = Mat(t_len, cfg.f_in);
        const double sigma = 0.3;
        for (const auto& n : pair.original_notes) {
            int on_f = grid.frame_index(n.onset_time);
            int off_f = grid.frame_end_index(n.offset_time);
            double center = (n.pitch - kPitchLow) * static_cast<double>(half - 1) / 87.0;
            double level = n.velocity / 127.0;
            auto add_bump = [&](int t, int channel0, double amp) {
                if (t < 0 || t >= t_len || amp <= 0.0) return;
                for (int j = 0; j < half; ++j) {
                    double d = (j - center) / sigma;
                    pair.features.at(t, channel0 + j) += amp * std::exp(-0.5 * d * d);
                }
            };
            for (int t = on_f; t < std::min(off_f, t_len); ++t) add_bump(t, 0, level);
            for (int t = on_f - soft_onset_width + 1; t <= on_f + soft_onset_width - 1; ++t) {
                double tri = 1.0 - std::abs(t - on_f) / static_cast<double>(soft_onset_width);
                add_bump(t, half, tri);
            }
        }
        out.push_back(std::move(pair));
    }
    return out;
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

namespace detail {

// affine per frame: out[t] = W in[t] + b, W is (F*Z) x in_dim
inline void encode_frames(const Mat& w, const std::vector<double>& b, const Mat& in,
                          std::vector<double>& pre, std::vector<double>& act) {
    const int t_len = in.nr, out_dim = w.nr, in_dim = w.nc;
    pre.resize(static_cast<size_t>(t_len) * out_dim);
    act.resize(pre.size());
    for (int t = 0; t < t_len; ++t) {
        const double* x = in.row(t);
        double* o = pre.data() + static_cast<size_t>(t) * out_dim;
        for (int i = 0; i < out_dim; ++i) {
            double acc = b[i];
            const double* wr = w.row(i);
            for (int j = 0; j < in_dim; ++j) acc += wr[j] * x[j];
            o[i] = acc;
        }
    }
    for (size_t i = 0; i < pre.size(); ++i) act[i] = std::tanh(pre[i]);
}

// onset/frame probabilities for every (t, p) cell
inline void head_binary_dense(const ToyNetConfig& cfg, const Mat& w, const std::vector<double>& b,
                              const std::vector<double>& grid, Mat& probs) {
    const int t_len = cfg.t_len, z = cfg.z, band = cfg.band();
    probs = Mat(t_len, kNumPitches);
    for (int t = 0; t < t_len; ++t) {
        const double* cells = grid.data() + static_cast<size_t>(t) * cfg.f_len * z;
        double* row = probs.row(t);
        for (int p = 0; p < kNumPitches; ++p) {
            const double* h = cells + static_cast<size_t>(p / band) * z;
            const double* wr = w.row(p);
            double acc = b[p];
            for (int j = 0; j < z; ++j) acc += wr[j] * h[j];
            row[p] = sigmoid(acc);
        }
    }
}

// softmax over the 128 classes of one cell; returns log-sum-exp shifted max
inline void cell_softmax(const double* logits, double* probs) {
    double mx = logits[0];
    for (int v = 1; v < kNumVelocityClasses; ++v) mx = std::max(mx, logits[v]);
    double sum = 0.0;
    for (int v = 0; v < kNumVelocityClasses; ++v) {
        probs[v] = std::exp(logits[v] - mx);
        sum += probs[v];
    }
    for (int v = 0; v < kNumVelocityClasses; ++v) probs[v] /= sum;
}

inline void head_velocity_cell(const ToyNetConfig& cfg, const DecoderHead& head,
                               const std::vector<double>& grid, int t, int p, double* probs) {
    const int z = cfg.z, band = cfg.band();
    const double* h =
        grid.data() + (static_cast<size_t>(t) * cfg.f_len + p / band) * z;
    double logits[kNumVelocityClasses];
    for (int v = 0; v < kNumVelocityClasses; ++v) {
        const double* wr = head.vel_w.row(p * kNumVelocityClasses + v);
        double acc = head.vel_b[p * kNumVelocityClasses + v];
        for (int j = 0; j < z; ++j) acc += wr[j] * h[j];
        logits[v] = acc;
    }
    cell_softmax(logits, probs);
}

} // namespace detail

struct ForwardResult {
    PianoRollTensors h1;
    PianoRollTensors h2;
};

// Dense forward pass producing full prediction tensors for both hierarchies.
inline ForwardResult forward_full(const ToyNetParams& p, const Mat& features,
                                  const StyleVector& style) {
    const ToyNetConfig& cfg = p.cfg;
    cfg.validate();
    if (features.nr != cfg.t_len || features.nc != cfg.f_in)
        throw std::runtime_error("forward_full: feature shape mismatch");

    std::vector<double> pre1, act1;
    detail::encode_frames(p.enc1_w, p.enc1_b, features, pre1, act1);
    HiddenGrid grid1(cfg.t_len, cfg.f_len, cfg.z);
    grid1.a = act1;
    HiddenGrid grid1i = inject_forward(p.inject, grid1, style);

    ForwardResult out;
    detail::head_binary_dense(cfg, p.dec1.onset_w, p.dec1.onset_b, grid1i.a, out.h1.onsets);
    detail::head_binary_dense(cfg, p.dec1.frame_w, p.dec1.frame_b, grid1i.a, out.h1.frames);
    out.h1.vel_probs = Tensor3(cfg.t_len, kNumPitches, kNumVelocityClasses);
    for (int t = 0; t < cfg.t_len; ++t)
        for (int q = 0; q < kNumPitches; ++q)
            detail::head_velocity_cell(cfg, p.dec1, grid1i.a, t, q, out.h1.vel_probs.slab(t, q));

    Mat enc2_in(cfg.t_len, cfg.enc2_in());
    for (int t = 0; t < cfg.t_len; ++t) {
        double* row = enc2_in.row(t);
        std::copy(out.h1.onsets.row(t), out.h1.onsets.row(t) + kNumPitches, row);
        std::copy(out.h1.frames.row(t), out.h1.frames.row(t) + kNumPitches, row + kNumPitches);
    }
    std::vector<double> pre2, act2;
    detail::encode_frames(p.enc2_w, p.enc2_b, enc2_in, pre2, act2);

    detail::head_binary_dense(cfg, p.dec2.onset_w, p.dec2.onset_b, act2, out.h2.onsets);
    detail::head_binary_dense(cfg, p.dec2.frame_w, p.dec2.frame_b, act2, out.h2.frames);
    out.h2.vel_probs = Tensor3(cfg.t_len, kNumPitches, kNumVelocityClasses);
    for (int t = 0; t < cfg.t_len; ++t)
        for (int q = 0; q < kNumPitches; ++q)
            detail::head_velocity_cell(cfg, p.dec2, act2, t, q, out.h2.vel_probs.slab(t, q));
    return out;
}

// Hierarchy-2 prediction, the inference output.
inline PianoRollTensors infer(const ToyNetParams& p, const Mat& features,
                              const StyleVector& style) {
    return forward_full(p, features, style).h2;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct TrainConfig {
    double lr = 1e-3;
    int epochs = 300;
    uint64_t seed = 0;
};

struct EpochStats {
    int epoch = 0;
    double loss = 0.0, l1 = 0.0, l2 = 0.0;
};

namespace detail {

struct PairMask {
    SelectionMask mask;
    std::vector<int> onset_cells, frame_cells, velocity_cells; // t * 88 + p
};

inline PairMask build_pair_mask(const PianoRollTensors& truth, const LossConfig& lc,
                                uint64_t pair_index) {
    LossConfig local = lc;
    local.rng_seed = lc.rng_seed + pair_index;
    PairMask pm;
    pm.mask = build_mask(truth, local);
    auto collect = [&](const std::vector<uint8_t>& m, std::vector<int>& cells) {
        for (size_t i = 0; i < m.size(); ++i)
            if (m[i]) cells.push_back(static_cast<int>(i));
    };
    collect(pm.mask.onsets, pm.onset_cells);
    collect(pm.mask.frames, pm.frame_cells);
    collect(pm.mask.velocities, pm.velocity_cells);
    return pm;
}

// One hierarchy's losses and logit-space gradients for the masked cells.
// Binary matrices carry dense prob grids; dlogit = (sigma - y) * scale at
// masked cells. Velocity is evaluated sparsely.
struct HierarchyEval {
    double onset_loss = 0.0, frame_loss = 0.0, vel_loss = 0.0;
    Mat donset_logit, dframe_logit;                  // T x 88, zero off-mask
    std::vector<double> vel_probs;                   // cells x 128
    std::vector<double> dvel_logit;                  // cells x 128, scaled
};

inline void eval_hierarchy(const ToyNetConfig& cfg, const DecoderHead& head,
                           const std::vector<double>& grid, const PianoRollTensors& truth,
                           const PairMask& pm, const Mat& onset_probs, const Mat& frame_probs,
                           double hier_weight, bool want_grads, HierarchyEval& ev) {
    const int t88 = kNumPitches;
    auto binary_term = [&](const std::vector<int>& cells, const Mat& probs, const Mat& target,
                           Mat& dlogit, double& loss_out) {
        double acc = 0.0;
        const double scale =
            cells.empty() ? 0.0 : hier_weight / (3.0 * static_cast<double>(cells.size()));
        if (want_grads) dlogit = Mat(cfg.t_len, t88);
        for (int idx : cells) {
            int t = idx / t88, p = idx % t88;
            double y = target.at(t, p);
            double q = probs.at(t, p);
            double qc = std::clamp(q, kPredClampEps, 1.0 - kPredClampEps);
            acc += -(y * std::log(qc) + (1.0 - y) * std::log(1.0 - qc));
            if (want_grads) dlogit.at(t, p) = (q - y) * scale;
        }
        loss_out = cells.empty() ? 0.0 : acc / static_cast<double>(cells.size());
    };
    binary_term(pm.onset_cells, onset_probs, truth.onsets, ev.donset_logit, ev.onset_loss);
    binary_term(pm.frame_cells, frame_probs, truth.frames, ev.dframe_logit, ev.frame_loss);

    const auto& vc = pm.velocity_cells;
    ev.vel_probs.assign(vc.size() * kNumVelocityClasses, 0.0);
    if (want_grads) ev.dvel_logit.assign(vc.size() * kNumVelocityClasses, 0.0);
    double acc = 0.0;
    const double vscale = vc.empty() ? 0.0 : hier_weight / (3.0 * static_cast<double>(vc.size()));
    for (size_t c = 0; c < vc.size(); ++c) {
        int t = vc[c] / t88, p = vc[c] % t88;
        double* probs = ev.vel_probs.data() + c * kNumVelocityClasses;
        head_velocity_cell(cfg, head, grid, t, p, probs);
        int klass = truth.velocity_class(t, p);
        double q = std::clamp(probs[klass], kPredClampEps, 1.0 - kPredClampEps);
        acc += -std::log(q);
        if (want_grads) {
            double* d = ev.dvel_logit.data() + c * kNumVelocityClasses;
            for (int v = 0; v < kNumVelocityClasses; ++v) d[v] = probs[v] * vscale;
            d[klass] -= vscale;
        }
    }
    ev.vel_loss = vc.empty() ? 0.0 : acc / static_cast<double>(vc.size());
}

// Accumulates head gradients and the hidden-grid gradient from logit-space
// gradients. Binary heads are dense over masked cells; velocity is sparse.
inline void head_backward(const ToyNetConfig& cfg, const DecoderHead& head,
                          const std::vector<double>& grid, const PairMask& pm,
                          const HierarchyEval& ev, DecoderHead& ghead,
                          std::vector<double>& dgrid) {
    const int z = cfg.z, band = cfg.band(), t88 = kNumPitches;
    auto binary_back = [&](const std::vector<int>& cells, const Mat& dlogit, const Mat& w,
                           Mat& gw, std::vector<double>& gb) {
        for (int idx : cells) {
            int t = idx / t88, p = idx % t88;
            double d = dlogit.at(t, p);
            if (d == 0.0) continue;
            const double* h = grid.data() + (static_cast<size_t>(t) * cfg.f_len + p / band) * z;
            double* gr = gw.row(p);
            const double* wr = w.row(p);
            double* dh = dgrid.data() + (static_cast<size_t>(t) * cfg.f_len + p / band) * z;
            gb[p] += d;
            for (int j = 0; j < z; ++j) {
                gr[j] += d * h[j];
                dh[j] += wr[j] * d;
            }
        }
    };
    binary_back(pm.onset_cells, ev.donset_logit, head.onset_w, ghead.onset_w, ghead.onset_b);
    binary_back(pm.frame_cells, ev.dframe_logit, head.frame_w, ghead.frame_w, ghead.frame_b);

    const auto& vc = pm.velocity_cells;
    for (size_t c = 0; c < vc.size(); ++c) {
        int t = vc[c] / t88, p = vc[c] % t88;
        const double* h = grid.data() + (static_cast<size_t>(t) * cfg.f_len + p / band) * z;
        double* dh = dgrid.data() + (static_cast<size_t>(t) * cfg.f_len + p / band) * z;
        const double* d = ev.dvel_logit.data() + c * kNumVelocityClasses;
        for (int v = 0; v < kNumVelocityClasses; ++v) {
            double dv = d[v];
            int row = p * kNumVelocityClasses + v;
            ghead.vel_b[row] += dv;
            double* gr = ghead.vel_w.row(row);
            const double* wr = head.vel_w.row(row);
            for (int j = 0; j < z; ++j) {
                gr[j] += dv * h[j];
                dh[j] += wr[j] * dv;
            }
        }
    }
}

// dW += dpre_t (outer) x_t per frame; din optionally accumulated.
inline void encoder_backward(const Mat& w, const Mat& in, const std::vector<double>& dpre,
                             Mat& gw, std::vector<double>& gb, Mat* din) {
    const int t_len = in.nr, out_dim = w.nr, in_dim = w.nc;
    for (int t = 0; t < t_len; ++t) {
        const double* x = in.row(t);
        const double* d = dpre.data() + static_cast<size_t>(t) * out_dim;
        double* dx = din ? din->row(t) : nullptr;
        for (int i = 0; i < out_dim; ++i) {
            double di = d[i];
            if (di == 0.0) continue;
            gb[i] += di;
            double* gr = gw.row(i);
            const double* wr = w.row(i);
            for (int j = 0; j < in_dim; ++j) {
                gr[j] += di * x[j];
                if (dx) dx[j] += wr[j] * di;
            }
        }
    }
}

struct PairLoss {
    double total = 0.0, l1 = 0.0, l2 = 0.0;
};

// Forward and (optionally) backward for one pair. Gradients of
// weight * (beta L1 + (1 - beta) L2) are accumulated into *grads.
inline PairLoss pair_forward_backward(const ToyNetParams& p, const SyntheticPair& pair,
                                      const PairMask& pm, const LossConfig& lc, double weight,
                                      ToyNetParams* grads) {
    const ToyNetConfig& cfg = p.cfg;
    const bool want_grads = grads != nullptr;
    if (pair.features.nr != cfg.t_len || pair.features.nc != cfg.f_in)
        throw std::runtime_error("toynet: feature shape does not match the model config");
    if (pair.target.n_frames() != cfg.t_len)
        throw std::runtime_error("toynet: target length does not match the model window");

    // hierarchy 1 forward
    std::vector<double> pre1, act1;
    encode_frames(p.enc1_w, p.enc1_b, pair.features, pre1, act1);
    HiddenGrid grid1(cfg.t_len, cfg.f_len, cfg.z);
    grid1.a = act1;
    InjectionCache icache;
    HiddenGrid grid1i = inject_forward(p.inject, grid1, pair.style, want_grads ? &icache : nullptr);

    Mat on1, fr1;
    head_binary_dense(cfg, p.dec1.onset_w, p.dec1.onset_b, grid1i.a, on1);
    head_binary_dense(cfg, p.dec1.frame_w, p.dec1.frame_b, grid1i.a, fr1);

    // hierarchy 2 forward
    Mat enc2_in(cfg.t_len, cfg.enc2_in());
    for (int t = 0; t < cfg.t_len; ++t) {
        double* row = enc2_in.row(t);
        std::copy(on1.row(t), on1.row(t) + kNumPitches, row);
        std::copy(fr1.row(t), fr1.row(t) + kNumPitches, row + kNumPitches);
    }
    std::vector<double> pre2, act2;
    encode_frames(p.enc2_w, p.enc2_b, enc2_in, pre2, act2);
    Mat on2, fr2;
    head_binary_dense(cfg, p.dec2.onset_w, p.dec2.onset_b, act2, on2);
    head_binary_dense(cfg, p.dec2.frame_w, p.dec2.frame_b, act2, fr2);

    HierarchyEval ev1, ev2;
    eval_hierarchy(cfg, p.dec1, grid1i.a, pair.target, pm, on1, fr1, weight * lc.beta,
                   want_grads, ev1);
    eval_hierarchy(cfg, p.dec2, act2, pair.target, pm, on2, fr2, weight * (1.0 - lc.beta),
                   want_grads, ev2);

    PairLoss out;
    out.l1 = (ev1.onset_loss + ev1.frame_loss + ev1.vel_loss) / 3.0;
    out.l2 = (ev2.onset_loss + ev2.frame_loss + ev2.vel_loss) / 3.0;
    out.total = lc.beta * out.l1 + (1.0 - lc.beta) * out.l2;
    if (!want_grads) return out;

    // hierarchy 2 backward
    std::vector<double> dact2(act2.size(), 0.0);
    head_backward(cfg, p.dec2, act2, pm, ev2, grads->dec2, dact2);
    std::vector<double> dpre2(act2.size());
    for (size_t i = 0; i < act2.size(); ++i) dpre2[i] = dact2[i] * (1.0 - act2[i] * act2[i]);
    Mat denc2_in(cfg.t_len, cfg.enc2_in());
    encoder_backward(p.enc2_w, enc2_in, dpre2, grads->enc2_w, grads->enc2_b, &denc2_in);

    // fold the hierarchy-2 consumption of on1/fr1 into their logit grads
    for (int t = 0; t < cfg.t_len; ++t) {
        const double* din = denc2_in.row(t);
        for (int q = 0; q < kNumPitches; ++q) {
            double o = on1.at(t, q), f = fr1.at(t, q);
            ev1.donset_logit.at(t, q) += din[q] * o * (1.0 - o);
            ev1.dframe_logit.at(t, q) += din[kNumPitches + q] * f * (1.0 - f);
        }
    }

    // hierarchy 1 backward. The enc2 path touches every cell, so the binary
    // heads are walked densely here.
    std::vector<double> dgrid1i(grid1i.a.size(), 0.0);
    {
        const int z = cfg.z, band = cfg.band();
        auto dense_back = [&](const Mat& dlogit, const Mat& w, Mat& gw, std::vector<double>& gb) {
            for (int t = 0; t < cfg.t_len; ++t) {
                const double* drow = dlogit.row(t);
                double* dcells = dgrid1i.data() + static_cast<size_t>(t) * cfg.f_len * z;
                const double* hcells = grid1i.a.data() + static_cast<size_t>(t) * cfg.f_len * z;
                for (int q = 0; q < kNumPitches; ++q) {
                    double d = drow[q];
                    if (d == 0.0) continue;
                    const double* h = hcells + static_cast<size_t>(q / band) * z;
                    double* dh = dcells + static_cast<size_t>(q / band) * z;
                    double* gr = gw.row(q);
                    const double* wr = w.row(q);
                    gb[q] += d;
                    for (int j = 0; j < z; ++j) {
                        gr[j] += d * h[j];
                        dh[j] += wr[j] * d;
                    }
                }
            }
        };
        dense_back(ev1.donset_logit, p.dec1.onset_w, grads->dec1.onset_w, grads->dec1.onset_b);
        dense_back(ev1.dframe_logit, p.dec1.frame_w, grads->dec1.frame_w, grads->dec1.frame_b);

        const auto& vc = pm.velocity_cells;
        for (size_t c = 0; c < vc.size(); ++c) {
            int t = vc[c] / kNumPitches, q = vc[c] % kNumPitches;
            const double* h =
                grid1i.a.data() + (static_cast<size_t>(t) * cfg.f_len + q / band) * z;
            double* dh = dgrid1i.data() + (static_cast<size_t>(t) * cfg.f_len + q / band) * z;
            const double* d = ev1.dvel_logit.data() + c * kNumVelocityClasses;
            for (int v = 0; v < kNumVelocityClasses; ++v) {
                double dv = d[v];
                int row = q * kNumVelocityClasses + v;
                grads->dec1.vel_b[row] += dv;
                double* gr = grads->dec1.vel_w.row(row);
                const double* wr = p.dec1.vel_w.row(row);
                for (int j = 0; j < z; ++j) {
                    gr[j] += dv * h[j];
                    dh[j] += wr[j] * dv;
                }
            }
        }
    }

    // injection layer backward
    HiddenGrid upstream(cfg.t_len, cfg.f_len, cfg.z);
    upstream.a = dgrid1i;
    InjectionGrads ig = inject_backward(p.inject, icache, upstream);
    auto axpy = [](std::vector<double>& dst, const std::vector<double>& src) {
        for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    };
    axpy(grads->inject.W.a, ig.dW.a);
    axpy(grads->inject.b, ig.db);
    axpy(grads->inject.gate_w1.a, ig.dgate_w1.a);
    axpy(grads->inject.gate_b1, ig.dgate_b1);
    axpy(grads->inject.gate_w2.a, ig.dgate_w2.a);
    axpy(grads->inject.gate_b2, ig.dgate_b2);

    // encoder 1 backward
    std::vector<double> dpre1(act1.size());
    for (size_t i = 0; i < act1.size(); ++i)
        dpre1[i] = ig.dinput.a[i] * (1.0 - act1[i] * act1[i]);
    encoder_backward(p.enc1_w, pair.features, dpre1, grads->enc1_w, grads->enc1_b, nullptr);
    return out;
}

} // namespace detail

// Mean full-batch loss with the training masks (pair i uses rng_seed + i).
inline EpochStats dataset_loss(const ToyNetParams& p, const std::vector<SyntheticPair>& data,
                               const LossConfig& lc) {
    EpochStats s;
    const double w = 1.0 / static_cast<double>(data.size());
    for (size_t i = 0; i < data.size(); ++i) {
        auto pm = detail::build_pair_mask(data[i].target, lc, i);
        auto pl = detail::pair_forward_backward(p, data[i], pm, lc, w, nullptr);
        s.loss += w * pl.total;
        s.l1 += w * pl.l1;
        s.l2 += w * pl.l2;
    }
    return s;
}

// Gradients of the mean full-batch loss, same shapes as the parameters.
inline ToyNetParams dataset_gradients(const ToyNetParams& p,
                                      const std::vector<SyntheticPair>& data,
                                      const LossConfig& lc) {
    ToyNetParams grads = zeros_like(p);
    const double w = 1.0 / static_cast<double>(data.size());
    for (size_t i = 0; i < data.size(); ++i) {
        auto pm = detail::build_pair_mask(data[i].target, lc, i);
        detail::pair_forward_backward(p, data[i], pm, lc, w, &grads);
    }
    return grads;
}

// Full-batch Adam (beta1 = 0.9, beta2 = 0.999, eps = 1e-8). Masks are fixed
// up front, so the whole run is a pure function of (params, data, configs).
inline std::vector<EpochStats> train(ToyNetParams& params,
                                     const std::vector<SyntheticPair>& data,
                                     const TrainConfig& tc, const LossConfig& lc) {
    if (data.empty()) throw std::runtime_error("train: empty dataset");
    const double w = 1.0 / static_cast<double>(data.size());

    std::vector<detail::PairMask> masks;
    masks.reserve(data.size());
    for (size_t i = 0; i < data.size(); ++i)
        masks.push_back(detail::build_pair_mask(data[i].target, lc, i));

    ToyNetParams m_state = zeros_like(params);
    ToyNetParams v_state = zeros_like(params);
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;

    std::vector<EpochStats> trace;
    trace.reserve(tc.epochs);
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        ToyNetParams grads = zeros_like(params);
        EpochStats s;
        s.epoch = epoch;
        for (size_t i = 0; i < data.size(); ++i) {
            auto pl = detail::pair_forward_backward(params, data[i], masks[i], lc, w, &grads);
            s.loss += w * pl.total;
            s.l1 += w * pl.l1;
            s.l2 += w * pl.l2;
        }
        if (!std::isfinite(s.loss))
            throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
        trace.push_back(s);

        auto pr = tensor_refs(params);
        auto gr = tensor_refs(grads);
        auto mr = tensor_refs(m_state);
        auto vr = tensor_refs(v_state);
        const double bc1 = 1.0 - std::pow(b1, epoch + 1);
        const double bc2 = 1.0 - std::pow(b2, epoch + 1);
        for (size_t k = 0; k < pr.size(); ++k) {
            auto& pv = *pr[k].data;
            auto& gv = *gr[k].data;
            auto& mv = *mr[k].data;
            auto& vv = *vr[k].data;
            for (size_t i = 0; i < pv.size(); ++i) {
                mv[i] = b1 * mv[i] + (1.0 - b1) * gv[i];
                vv[i] = b2 * vv[i] + (1.0 - b2) * gv[i] * gv[i];
                double mhat = mv[i] / bc1;
                double vhat = vv[i] / bc2;
                pv[i] -= tc.lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
    return trace;
}

} // namespace amtapc
