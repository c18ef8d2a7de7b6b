#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "amtapc/core.hpp"
#include "amtapc/midi.hpp"
#include "amtapc/roll.hpp"

namespace amtapc {

struct F1Scores {
    double onset = 0.0, frame = 0.0, velocity = 0.0, average = 0.0;
};

// Cell-level F1 per matrix. Positivity: onset/frame value > 0.5, velocity
// argmax class != 0 (same rule for prediction and truth). F1 is 1 when both
// sides have zero positives and 0 when exactly one does.
inline F1Scores f1_scores(const PianoRollTensors& pred, const PianoRollTensors& truth) {
    const int t_len = truth.n_frames();
    if (pred.n_frames() != t_len)
        throw std::runtime_error("f1_scores: frame count mismatch");

    auto f1_of = [](size_t tp, size_t fp, size_t fn) {
        if (tp == 0 && fp == 0 && fn == 0) return 1.0;
        if (tp == 0) return 0.0;
        double precision = static_cast<double>(tp) / (tp + fp);
        double recall = static_cast<double>(tp) / (tp + fn);
        return 2.0 * precision * recall / (precision + recall);
    };

    size_t tp[3] = {}, fp[3] = {}, fn[3] = {};
    for (int t = 0; t < t_len; ++t) {
        for (int p = 0; p < kNumPitches; ++p) {
            bool pos_pred[3] = {pred.onsets.at(t, p) > 0.5, pred.frames.at(t, p) > 0.5,
                                pred.velocity_class(t, p) != 0};
            bool pos_truth[3] = {truth.onsets.at(t, p) > 0.5, truth.frames.at(t, p) > 0.5,
                                 truth.velocity_class(t, p) != 0};
            for (int k = 0; k < 3; ++k) {
                if (pos_pred[k] && pos_truth[k]) ++tp[k];
                else if (pos_pred[k]) ++fp[k];
                else if (pos_truth[k]) ++fn[k];
            }
        }
    }
    F1Scores out;
    out.onset = f1_of(tp[0], fp[0], fn[0]);
    out.frame = f1_of(tp[1], fp[1], fn[1]);
    out.velocity = f1_of(tp[2], fp[2], fn[2]);
    out.average = (out.onset + out.frame + out.velocity) / 3.0;
    return out;
}

// Per-frame pitch-class energies, unit-max normalized (zero frames stay zero).
struct ChromaSequence {
    int n = 0;
    double frame_hop = 0.0;
    std::vector<double> a; // n x 12

    double* frame(int i) { return a.data() + static_cast<size_t>(i) * 12; }
    const double* frame(int i) const { return a.data() + static_cast<size_t>(i) * 12; }
};

namespace detail {

inline void unit_max_normalize(double* frame) {
    double mx = 0.0;
    for (int k = 0; k < 12; ++k) mx = std::max(mx, frame[k]);
    if (mx > 0.0)
        for (int k = 0; k < 12; ++k) frame[k] /= mx;
}

// In-place iterative radix-2 FFT.
inline void fft_radix2(std::vector<std::complex<double>>& x) {
    const size_t n = x.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * M_PI / static_cast<double>(len);
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                auto u = x[i + k];
                auto v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

} // namespace detail

// Sums note velocities into pitch classes (C = 0, class = pitch mod 12) for
// the notes sounding in each frame.
inline ChromaSequence chroma_from_notes(const std::vector<MidiNote>& notes, double hop) {
    if (hop <= 0.0) throw std::runtime_error("chroma_from_notes: hop must be positive");
    ChromaSequence out;
    out.frame_hop = hop;
    double end = 0.0;
    for (const auto& n : notes) end = std::max(end, n.offset_time);
    out.n = std::max(1, static_cast<int>(std::ceil(end / hop - 1e-9)));
    out.a.assign(static_cast<size_t>(out.n) * 12, 0.0);
    for (const auto& n : notes) {
        int c = ((n.pitch % 12) + 12) % 12;
        int f0 = std::max(0, static_cast<int>(std::floor(n.onset_time / hop + 1e-9)));
        int f1 = std::min(out.n, static_cast<int>(std::ceil(n.offset_time / hop - 1e-9)));
        for (int f = f0; f < f1; ++f) out.frame(f)[c] += n.velocity;
    }
    for (int f = 0; f < out.n; ++f) detail::unit_max_normalize(out.frame(f));
    return out;
}

// STFT chroma: Hann window of 4096 samples, each bin's energy assigned to
// the pitch class of its nearest equal-temperament semitone (A4 = 440 Hz)
// for frequencies in [27.5, 4186] Hz.
inline ChromaSequence chroma_from_audio(const std::vector<double>& pcm, int sample_rate,
                                        double hop) {
    constexpr int kWindow = 4096;
    if (pcm.empty()) throw std::runtime_error("chroma_from_audio: empty signal");
    if (sample_rate < 8000)
        throw std::runtime_error("chroma_from_audio: sample rate too low for analysis window");
    if (hop <= 0.0) throw std::runtime_error("chroma_from_audio: hop must be positive");

    const int hop_samples = std::max(1, static_cast<int>(std::llround(hop * sample_rate)));
    const int n_frames = std::max(
        1, static_cast<int>((pcm.size() + hop_samples - 1) / static_cast<size_t>(hop_samples)));

    std::vector<double> hann(kWindow);
    for (int i = 0; i < kWindow; ++i)
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (kWindow - 1));

    // pitch class per FFT bin, -1 when outside the piano band
    std::vector<int> bin_class(kWindow / 2 + 1, -1);
    for (int k = 1; k <= kWindow / 2; ++k) {
        double freq = static_cast<double>(k) * sample_rate / kWindow;
        if (freq < 27.5 || freq > 4186.0) continue;
        int midi = static_cast<int>(std::lround(69.0 + 12.0 * std::log2(freq / 440.0)));
        bin_class[k] = ((midi % 12) + 12) % 12;
    }

    ChromaSequence out;
    out.n = n_frames;
    out.frame_hop = hop;
    out.a.assign(static_cast<size_t>(n_frames) * 12, 0.0);

    std::vector<std::complex<double>> buf(kWindow);
    for (int f = 0; f < n_frames; ++f) {
        const size_t start = static_cast<size_t>(f) * hop_samples;
        for (int i = 0; i < kWindow; ++i) {
            double s = start + i < pcm.size() ? pcm[start + i] : 0.0;
            buf[i] = {s * hann[i], 0.0};
        }
        detail::fft_radix2(buf);
        double* row = out.frame(f);
        for (int k = 1; k <= kWindow / 2; ++k) {
            if (bin_class[k] < 0) continue;
            row[bin_class[k]] += std::norm(buf[k]);
        }
        detail::unit_max_normalize(row);
    }
    return out;
}

namespace detail {

// Cosine distance with the zero-frame convention: zero vs non-zero is 1,
// zero vs zero is 0.
inline double cosine_distance(const double* x, const double* y) {
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (int k = 0; k < 12; ++k) {
        dot += x[k] * y[k];
        nx += x[k] * x[k];
        ny += y[k] * y[k];
    }
    if (nx == 0.0 && ny == 0.0) return 0.0;
    if (nx == 0.0 || ny == 0.0) return 1.0;
    return 1.0 - dot / (std::sqrt(nx) * std::sqrt(ny));
}

} // namespace detail

struct DtwResult {
    std::vector<std::pair<int, int>> path; // (i, j) from (0,0) to (N-1, M-1)
    double cost = 0.0;
};

// Classic DTW with steps (1,1), (1,0), (0,1) over cosine distances.
inline DtwResult dtw_align(const ChromaSequence& a, const ChromaSequence& b) {
    if (a.n == 0 || b.n == 0) throw std::runtime_error("dtw_align: empty sequence");
    const int n = a.n, m = b.n;
    const double inf = std::numeric_limits<double>::infinity();
    Mat d(n, m), acc(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) d.at(i, j) = detail::cosine_distance(a.frame(i), b.frame(j));

    // back[i][j]: 0 diagonal, 1 from above (i-1,j), 2 from left (i,j-1)
    std::vector<uint8_t> back(static_cast<size_t>(n) * m, 0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            double diag = i > 0 && j > 0 ? acc.at(i - 1, j - 1) : (i == 0 && j == 0 ? 0.0 : inf);
            double up = i > 0 ? acc.at(i - 1, j) : inf;
            double left = j > 0 ? acc.at(i, j - 1) : inf;
            double best = diag;
            uint8_t dir = 0;
            if (up < best) {
                best = up;
                dir = 1;
            }
            if (left < best) {
                best = left;
                dir = 2;
            }
            acc.at(i, j) = d.at(i, j) + best;
            back[static_cast<size_t>(i) * m + j] = dir;
        }
    }

    DtwResult out;
    out.cost = acc.at(n - 1, m - 1);
    int i = n - 1, j = m - 1;
    while (true) {
        out.path.emplace_back(i, j);
        if (i == 0 && j == 0) break;
        uint8_t dir = back[static_cast<size_t>(i) * m + j];
        if (dir == 0) {
            --i;
            --j;
        } else if (dir == 1) {
            --i;
        } else {
            --j;
        }
    }
    std::reverse(out.path.begin(), out.path.end());
    return out;
}

struct QmaxParams {
    double kappa = 0.095;
    double gamma_o = 5.0;
    double gamma_e = 0.5;
    int m_embed = 9;
    int tau_lag = 1;
};

struct QmaxResult {
    double qmax = 0.0;
    double distance = 0.0; // sqrt(n_b) / qmax; infinite when qmax == 0
    bool infinite = false;
    int oti = 0;
    int n_a = 0, n_b = 0; // raw frame counts
};

// Cross-recurrence Q_max dissimilarity: optimal transposition, delay
// embedding, a mutual kappa-nearest-neighbor recurrence matrix, and the
// longest weighted alignment as a dynamic program over that matrix.
inline QmaxResult qmax(const ChromaSequence& a, const ChromaSequence& b,
                       const QmaxParams& params = {}) {
    const int m = params.m_embed, tau = params.tau_lag;
    if (m < 1 || tau < 1) throw std::runtime_error("qmax: m_embed and tau_lag must be >= 1");
    if (a.n <= m * tau || b.n <= m * tau)
        throw std::runtime_error("qmax: sequences must be longer than m_embed * tau_lag");

    // optimal transposition index from the global mean chromas
    std::array<double, 12> mean_a{}, mean_b{};
    for (int i = 0; i < a.n; ++i)
        for (int k = 0; k < 12; ++k) mean_a[k] += a.frame(i)[k];
    for (int j = 0; j < b.n; ++j)
        for (int k = 0; k < 12; ++k) mean_b[k] += b.frame(j)[k];
    int oti = 0;
    double best_dot = -1.0;
    for (int s = 0; s < 12; ++s) {
        double dot = 0.0;
        for (int k = 0; k < 12; ++k) dot += mean_a[k] * mean_b[(k + s) % 12];
        if (dot > best_dot) {
            best_dot = dot;
            oti = s;
        }
    }
    ChromaSequence br;
    br.n = b.n;
    br.frame_hop = b.frame_hop;
    br.a.resize(b.a.size());
    for (int j = 0; j < b.n; ++j)
        for (int k = 0; k < 12; ++k) br.frame(j)[k] = b.frame(j)[(k + oti) % 12];

    // delay embedding: m stacked frames at lag tau
    const int na = a.n - (m - 1) * tau;
    const int nb = br.n - (m - 1) * tau;
    const int dim = 12 * m;
    std::vector<double> ea(static_cast<size_t>(na) * dim), eb(static_cast<size_t>(nb) * dim);
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < 12; ++k)
                ea[static_cast<size_t>(i) * dim + j * 12 + k] = a.frame(i + j * tau)[k];
    for (int i = 0; i < nb; ++i)
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < 12; ++k)
                eb[static_cast<size_t>(i) * dim + j * 12 + k] = br.frame(i + j * tau)[k];

    // squared euclidean distances between embedded frames
    std::vector<double> dist(static_cast<size_t>(na) * nb);
    for (int i = 0; i < na; ++i) {
        const double* xi = ea.data() + static_cast<size_t>(i) * dim;
        double* drow = dist.data() + static_cast<size_t>(i) * nb;
        for (int j = 0; j < nb; ++j) {
            const double* yj = eb.data() + static_cast<size_t>(j) * dim;
            double acc = 0.0;
            for (int k = 0; k < dim; ++k) {
                double v = xi[k] - yj[k];
                acc += v * v;
            }
            drow[j] = acc;
        }
    }

    // mutual kappa-nearest rule: keep (i, j) only if it is within both the
    // row's and the column's kappa-quantile of distances
    const int ka = std::max(1, static_cast<int>(std::ceil(params.kappa * nb)));
    const int kb = std::max(1, static_cast<int>(std::ceil(params.kappa * na)));
    std::vector<double> eps_row(na), eps_col(nb), scratch;
    for (int i = 0; i < na; ++i) {
        scratch.assign(dist.begin() + static_cast<size_t>(i) * nb,
                       dist.begin() + static_cast<size_t>(i + 1) * nb);
        std::nth_element(scratch.begin(), scratch.begin() + (ka - 1), scratch.end());
        eps_row[i] = scratch[ka - 1];
    }
    for (int j = 0; j < nb; ++j) {
        scratch.resize(na);
        for (int i = 0; i < na; ++i) scratch[i] = dist[static_cast<size_t>(i) * nb + j];
        std::nth_element(scratch.begin(), scratch.begin() + (kb - 1), scratch.end());
        eps_col[j] = scratch[kb - 1];
    }
    std::vector<uint8_t> crp(static_cast<size_t>(na) * nb);
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < nb; ++j) {
            double v = dist[static_cast<size_t>(i) * nb + j];
            crp[static_cast<size_t>(i) * nb + j] = v <= eps_row[i] && v <= eps_col[j];
        }

    // longest weighted alignment; gap penalty depends on whether the
    // predecessor cell was itself matched (opening) or not (extension)
    std::vector<double> L(static_cast<size_t>(na) * nb, 0.0);
    auto lval = [&](int i, int j) { return i >= 0 && j >= 0 ? L[static_cast<size_t>(i) * nb + j] : 0.0; };
    auto matched = [&](int i, int j) {
        return i >= 0 && j >= 0 && crp[static_cast<size_t>(i) * nb + j] != 0;
    };
    double q = 0.0;
    for (int i = 0; i < na; ++i) {
        for (int j = 0; j < nb; ++j) {
            double v;
            if (crp[static_cast<size_t>(i) * nb + j]) {
                v = std::max({lval(i - 1, j - 1), lval(i - 2, j - 1), lval(i - 1, j - 2)}) + 1.0;
            } else {
                auto gapped = [&](int pi, int pj) {
                    if (pi < 0 || pj < 0) return 0.0;
                    double gap = matched(pi, pj) ? params.gamma_o : params.gamma_e;
                    return lval(pi, pj) - gap;
                };
                v = std::max({0.0, gapped(i - 1, j - 1), gapped(i - 2, j - 1), gapped(i - 1, j - 2)});
            }
            L[static_cast<size_t>(i) * nb + j] = v;
            q = std::max(q, v);
        }
    }

    QmaxResult out;
    out.qmax = q;
    out.oti = oti;
    out.n_a = a.n;
    out.n_b = b.n;
    if (q > 0.0) {
        out.distance = std::sqrt(static_cast<double>(b.n)) / q;
    } else {
        out.infinite = true;
        out.distance = std::numeric_limits<double>::infinity();
    }
    return out;
}

} // namespace amtapc
