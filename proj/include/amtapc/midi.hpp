#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "amtapc/core.hpp"

namespace amtapc {

struct MidiNote {
    double onset_time = 0.0;  // seconds
    double offset_time = 0.0; // seconds, > onset_time
    int pitch = 0;            // MIDI note number, piano range [21, 108]
    int velocity = 0;         // [1, 127]
};

struct MidiParseResult {
    std::vector<MidiNote> notes; // sorted by onset_time
    int dropped_out_of_range = 0;
};

struct MidiError : std::runtime_error {
    size_t byte_offset;
    MidiError(const std::string& what, size_t offset)
        : std::runtime_error("midi parse error at byte " + std::to_string(offset) + ": " + what),
          byte_offset(offset) {}
};

namespace detail {

struct ByteReader {
    std::span<const uint8_t> buf;
    size_t pos = 0;

    bool eof() const { return pos >= buf.size(); }
    size_t remaining() const { return buf.size() - pos; }

    uint8_t u8() {
        if (pos >= buf.size()) throw MidiError("unexpected end of data", pos);
        return buf[pos++];
    }
    uint16_t u16() { return static_cast<uint16_t>(u8() << 8 | u8()); }
    uint32_t u32() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = v << 8 | u8();
        return v;
    }
    uint32_t varlen() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            uint8_t b = u8();
            v = v << 7 | (b & 0x7f);
            if (!(b & 0x80)) return v;
        }
        throw MidiError("variable-length quantity longer than 4 bytes", pos);
    }
    void skip(size_t n) {
        if (remaining() < n) throw MidiError("truncated event data", pos);
        pos += n;
    }
};

// Piecewise-linear tick -> seconds map built from set-tempo events.
struct TempoMap {
    // (tick, microseconds per quarter note), sorted by tick
    std::vector<std::pair<uint64_t, uint32_t>> changes;

    void add(uint64_t tick, uint32_t uspq) { changes.emplace_back(tick, uspq); }

    void finalize() {
        std::sort(changes.begin(), changes.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
    }

    double seconds_at(uint64_t tick, int division) const {
        double us = 0.0;
        uint64_t prev_tick = 0;
        uint32_t tempo = 500000; // default 120 BPM
        for (const auto& [t, uspq] : changes) {
            if (t >= tick) break;
            us += static_cast<double>(t - prev_tick) * tempo / division;
            prev_tick = t;
            tempo = uspq;
        }
        us += static_cast<double>(tick - prev_tick) * tempo / division;
        return us / 1e6;
    }
};

struct RawNote {
    uint64_t on_tick, off_tick;
    int pitch, velocity;
};

} // namespace detail

inline constexpr int kPitchLow = 21;
inline constexpr int kPitchHigh = 108;

// Parses a Standard MIDI File (format 0 or 1). Note-on with velocity 0 is a
// note-off. Notes outside the piano range [21, 108] are dropped and counted.
inline MidiParseResult parse_midi(std::span<const uint8_t> bytes) {
    detail::ByteReader r{bytes};

    if (r.remaining() < 14) throw MidiError("file shorter than MThd header", 0);
    if (!(bytes[0] == 'M' && bytes[1] == 'T' && bytes[2] == 'h' && bytes[3] == 'd'))
        throw MidiError("missing MThd magic", 0);
    r.pos = 4;
    uint32_t hdr_len = r.u32();
    if (hdr_len < 6) throw MidiError("MThd length < 6", 4);
    uint16_t format = r.u16();
    uint16_t ntrks = r.u16();
    uint16_t division = r.u16();
    if (format > 1) throw MidiError("unsupported SMF format " + std::to_string(format), 8);
    if (division & 0x8000) throw MidiError("SMPTE time division not supported", 12);
    if (division == 0) throw MidiError("zero ticks per quarter note", 12);
    r.skip(hdr_len - 6);

    detail::TempoMap tempo_map;
    std::vector<detail::RawNote> raw;

    for (int trk = 0; trk < ntrks; ++trk) {
        size_t trk_hdr = r.pos;
        if (r.remaining() < 8) throw MidiError("missing MTrk header", trk_hdr);
        if (!(r.u8() == 'M' && r.u8() == 'T' && r.u8() == 'r' && r.u8() == 'k'))
            throw MidiError("missing MTrk magic", trk_hdr);
        uint32_t trk_len = r.u32();
        size_t trk_end = r.pos + trk_len;
        if (trk_end > bytes.size())
            throw MidiError("track length exceeds file size", trk_hdr + 4);

        uint64_t tick = 0;
        uint8_t running_status = 0;
        // open note-ons per (channel, pitch), FIFO
        std::map<std::pair<int, int>, std::vector<detail::RawNote>> open;

        while (r.pos < trk_end) {
            tick += r.varlen();
            uint8_t b = r.u8();
            uint8_t status;
            if (b & 0x80) {
                status = b;
            } else {
                if (running_status == 0) throw MidiError("data byte without status", r.pos - 1);
                status = running_status;
                --r.pos;
            }

            if (status == 0xff) {
                uint8_t type = r.u8();
                uint32_t len = r.varlen();
                size_t data_pos = r.pos;
                if (type == 0x51 && len == 3) {
                    uint32_t uspq = r.u8();
                    uspq = uspq << 8 | r.u8();
                    uspq = uspq << 8 | r.u8();
                    tempo_map.add(tick, uspq);
                } else {
                    r.skip(len);
                }
                (void)data_pos;
                running_status = 0;
            } else if (status == 0xf0 || status == 0xf7) {
                uint32_t len = r.varlen();
                r.skip(len);
                running_status = 0;
            } else if (status >= 0xf0) {
                throw MidiError("unexpected system message", r.pos - 1);
            } else {
                running_status = status;
                uint8_t kind = status & 0xf0;
                int channel = status & 0x0f;
                switch (kind) {
                case 0x80:
                case 0x90: {
                    int pitch = r.u8() & 0x7f;
                    int vel = r.u8() & 0x7f;
                    bool is_on = (kind == 0x90) && vel > 0;
                    auto key = std::make_pair(channel, pitch);
                    if (is_on) {
                        open[key].push_back({tick, 0, pitch, vel});
                    } else {
                        auto it = open.find(key);
                        if (it != open.end() && !it->second.empty()) {
                            detail::RawNote n = it->second.front();
                            it->second.erase(it->second.begin());
                            n.off_tick = tick;
                            if (n.off_tick > n.on_tick) raw.push_back(n);
                        }
                        // stray note-off: ignore
                    }
                    break;
                }
                case 0xa0:
                case 0xb0:
                case 0xe0:
                    r.skip(2);
                    break;
                case 0xc0:
                case 0xd0:
                    r.skip(1);
                    break;
                default:
                    throw MidiError("bad status byte", r.pos - 1);
                }
            }
        }
        if (r.pos != trk_end) throw MidiError("event ran past declared track end", r.pos);

        // close any notes still sounding at end of track
        for (auto& [key, stack] : open) {
            for (auto n : stack) {
                n.off_tick = tick;
                if (n.off_tick > n.on_tick) raw.push_back(n);
            }
        }
    }

    tempo_map.finalize();

    MidiParseResult result;
    for (const auto& n : raw) {
        if (n.pitch < kPitchLow || n.pitch > kPitchHigh) {
            ++result.dropped_out_of_range;
            continue;
        }
        MidiNote note;
        note.onset_time = tempo_map.seconds_at(n.on_tick, division);
        note.offset_time = tempo_map.seconds_at(n.off_tick, division);
        note.pitch = n.pitch;
        note.velocity = n.velocity;
        result.notes.push_back(note);
    }
    std::sort(result.notes.begin(), result.notes.end(), [](const MidiNote& a, const MidiNote& b) {
        if (a.onset_time != b.onset_time) return a.onset_time < b.onset_time;
        if (a.pitch != b.pitch) return a.pitch < b.pitch;
        return a.offset_time < b.offset_time;
    });
    return result;
}

// Writes a single-track format-0 file at 120 BPM. Ticks per quarter is 625,
// i.e. 1250 ticks per second, so 16 ms frame boundaries land on exact ticks.
inline std::vector<uint8_t> write_midi(const std::vector<MidiNote>& notes) {
    constexpr int kTpq = 625;
    constexpr double kTicksPerSecond = kTpq * 2.0; // 120 BPM

    struct Event {
        uint64_t tick;
        bool is_on;
        int pitch, velocity;
    };
    std::vector<Event> events;
    events.reserve(notes.size() * 2);
    for (const auto& n : notes) {
        auto tick_of = [&](double sec) {
            return static_cast<uint64_t>(std::llround(sec * kTicksPerSecond));
        };
        uint64_t on = tick_of(n.onset_time);
        uint64_t off = tick_of(n.offset_time);
        if (off <= on) off = on + 1;
        int pitch = std::clamp(n.pitch, 0, 127);
        int vel = std::clamp(n.velocity, 1, 127);
        events.push_back({on, true, pitch, vel});
        events.push_back({off, false, pitch, 0});
    }
    // offs before ons at the same tick so re-strikes stay well formed
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        if (a.tick != b.tick) return a.tick < b.tick;
        if (a.is_on != b.is_on) return !a.is_on;
        return a.pitch < b.pitch;
    });

    std::vector<uint8_t> track;
    auto put_varlen = [&](uint64_t v) {
        uint8_t stack[8];
        int n = 0;
        stack[n++] = v & 0x7f;
        while (v >>= 7) stack[n++] = (v & 0x7f) | 0x80;
        while (n) track.push_back(stack[--n]);
    };

    // tempo: 500000 us per quarter = 120 BPM
    put_varlen(0);
    for (uint8_t b : {0xff, 0x51, 0x03, 0x07, 0xa1, 0x20}) track.push_back(b);

    uint64_t prev_tick = 0;
    for (const auto& e : events) {
        put_varlen(e.tick - prev_tick);
        prev_tick = e.tick;
        track.push_back(e.is_on ? 0x90 : 0x80);
        track.push_back(static_cast<uint8_t>(e.pitch));
        track.push_back(static_cast<uint8_t>(e.velocity));
    }
    put_varlen(0);
    for (uint8_t b : {0xff, 0x2f, 0x00}) track.push_back(b);

    std::vector<uint8_t> out;
    auto put_u32 = [&](uint32_t v) {
        out.push_back(v >> 24);
        out.push_back(v >> 16 & 0xff);
        out.push_back(v >> 8 & 0xff);
        out.push_back(v & 0xff);
    };
    auto put_u16 = [&](uint16_t v) {
        out.push_back(v >> 8);
        out.push_back(v & 0xff);
    };
    for (uint8_t b : {'M', 'T', 'h', 'd'}) out.push_back(b);
    put_u32(6);
    put_u16(0); // format 0
    put_u16(1); // one track
    put_u16(kTpq);
    for (uint8_t b : {'M', 'T', 'r', 'k'}) out.push_back(b);
    put_u32(static_cast<uint32_t>(track.size()));
    out.insert(out.end(), track.begin(), track.end());
    return out;
}

} // namespace amtapc
