#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace amtapc {

struct WavData {
    std::vector<double> samples; // mono, in [-1, 1]
    int sample_rate = 0;
};

// Reads 16-bit PCM WAV; stereo is averaged down to mono.
inline WavData read_wav(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    auto u16 = [&]() {
        unsigned char b[2];
        is.read(reinterpret_cast<char*>(b), 2);
        return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8;
    };
    auto u32 = [&]() {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
               static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
    };
    char tag[4];
    is.read(tag, 4);
    if (!is || std::memcmp(tag, "RIFF", 4) != 0) throw std::runtime_error("not a RIFF file: " + path);
    u32();
    is.read(tag, 4);
    if (!is || std::memcmp(tag, "WAVE", 4) != 0) throw std::runtime_error("not a WAVE file: " + path);

    int channels = 0, bits = 0, rate = 0;
    std::vector<int16_t> raw;
    while (is.read(tag, 4)) {
        uint32_t size = u32();
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            uint32_t fmt = u16();
            channels = static_cast<int>(u16());
            rate = static_cast<int>(u32());
            u32(); // byte rate
            u16(); // block align
            bits = static_cast<int>(u16());
            if (size > 16) is.seekg(size - 16, std::ios::cur);
            if (fmt != 1) throw std::runtime_error("wav: only PCM supported: " + path);
        } else if (std::memcmp(tag, "data", 4) == 0) {
            raw.resize(size / 2);
            is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(size / 2 * 2));
            if (!is) throw std::runtime_error("wav: truncated data chunk: " + path);
        } else {
            is.seekg(size + (size & 1), std::ios::cur);
        }
    }
    if (channels == 0 || rate == 0) throw std::runtime_error("wav: missing fmt chunk: " + path);
    if (bits != 16) throw std::runtime_error("wav: only 16-bit PCM supported: " + path);
    if (channels < 1 || channels > 2) throw std::runtime_error("wav: unsupported channel count");

    WavData out;
    out.sample_rate = rate;
    size_t n = raw.size() / channels;
    out.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) acc += raw[i * channels + c];
        out.samples[i] = acc / channels / 32768.0;
    }
    return out;
}

inline void write_wav(const std::string& path, const std::vector<double>& samples,
                      int sample_rate) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    auto u16 = [&](uint32_t v) {
        char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8 & 0xff)};
        os.write(b, 2);
    };
    auto u32 = [&](uint32_t v) {
        char b[4] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8 & 0xff),
                     static_cast<char>(v >> 16 & 0xff), static_cast<char>(v >> 24 & 0xff)};
        os.write(b, 4);
    };
    uint32_t data_size = static_cast<uint32_t>(samples.size() * 2);
    os.write("RIFF", 4);
    u32(36 + data_size);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    u32(16);
    u16(1);
    u16(1);
    u32(static_cast<uint32_t>(sample_rate));
    u32(static_cast<uint32_t>(sample_rate) * 2);
    u16(2);
    u16(16);
    os.write("data", 4);
    u32(data_size);
    for (double s : samples) {
        double x = s < -1.0 ? -1.0 : (s > 1.0 ? 1.0 : s);
        int16_t v = static_cast<int16_t>(x * 32767.0);
        u16(static_cast<uint16_t>(v));
    }
}

} // namespace amtapc
