#pragma once

#include <vector>

#include "amtapc/midi.hpp"
#include "amtapc/roll.hpp"

namespace amtapc {

struct PostprocConfig {
    double min_note_seconds = 0.08;
    double onset_threshold = 0.5;
};

// Drops notes strictly shorter than min_note_seconds; an exactly 0.08 s note
// survives. Order is preserved.
inline std::vector<MidiNote> clean_notes(const std::vector<MidiNote>& notes,
                                         const PostprocConfig& config) {
    std::vector<MidiNote> out;
    out.reserve(notes.size());
    for (const auto& n : notes)
        if (!(n.offset_time - n.onset_time < config.min_note_seconds)) out.push_back(n);
    return out;
}

inline std::vector<MidiNote> decode_and_clean(const PianoRollTensors& pred,
                                              const PostprocConfig& config,
                                              const FrameGrid& grid) {
    return clean_notes(tensors_to_notes(pred, config.onset_threshold, grid), config);
}

} // namespace amtapc
