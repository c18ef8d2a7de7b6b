#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "amtapc/core.hpp"
#include "amtapc/roll.hpp"

namespace amtapc {

// APCT tensor record: magic "APCT", u8 version=1, u8 rank, u32 little-endian
// size per dimension, then row-major float32 little-endian data. A file may
// hold several consecutive records.

struct TensorData {
    std::vector<uint32_t> dims;
    std::vector<float> data;
};

namespace detail {

inline void put_u32_le(std::ostream& os, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8 & 0xff),
                 static_cast<char>(v >> 16 & 0xff), static_cast<char>(v >> 24 & 0xff)};
    os.write(b, 4);
}

inline uint32_t get_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

} // namespace detail

inline void write_tensor_record(std::ostream& os, const std::vector<uint32_t>& dims,
                                const float* data) {
    os.write("APCT", 4);
    os.put(1); // version
    os.put(static_cast<char>(dims.size()));
    size_t count = 1;
    for (uint32_t d : dims) {
        detail::put_u32_le(os, d);
        count *= d;
    }
    for (size_t i = 0; i < count; ++i) {
        uint32_t bits;
        std::memcpy(&bits, &data[i], 4);
        detail::put_u32_le(os, bits);
    }
}

inline void write_tensor_record(std::ostream& os, const std::vector<uint32_t>& dims,
                                const std::vector<double>& data) {
    std::vector<float> f(data.begin(), data.end());
    write_tensor_record(os, dims, f.data());
}

// Reads one record. Returns false on clean end of stream.
inline bool read_tensor_record(std::istream& is, TensorData& out) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() == 0) return false;
    if (is.gcount() != 4 || std::memcmp(magic, "APCT", 4) != 0)
        throw std::runtime_error("tensor file: bad APCT magic");
    int version = is.get();
    if (version != 1) throw std::runtime_error("tensor file: unsupported version");
    int rank = is.get();
    if (rank < 1 || rank > 8) throw std::runtime_error("tensor file: bad rank");
    out.dims.resize(rank);
    size_t count = 1;
    for (int i = 0; i < rank; ++i) {
        out.dims[i] = detail::get_u32_le(is);
        count *= out.dims[i];
    }
    out.data.resize(count);
    for (size_t i = 0; i < count; ++i) {
        uint32_t bits = detail::get_u32_le(is);
        std::memcpy(&out.data[i], &bits, 4);
    }
    if (!is) throw std::runtime_error("tensor file: truncated record");
    return true;
}

inline void write_tensor_file(const std::string& path, const std::vector<uint32_t>& dims,
                              const std::vector<double>& data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    write_tensor_record(os, dims, data);
}

inline TensorData read_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    TensorData t;
    if (!read_tensor_record(is, t)) throw std::runtime_error("empty tensor file: " + path);
    return t;
}

// A PianoRollTensors file holds three records: onsets (T x 88), frames
// (T x 88), velocities (T x 88 x 128). One-hot truth is expanded on write.
inline void write_roll_file(const std::string& path, const PianoRollTensors& prt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    const uint32_t t_len = static_cast<uint32_t>(prt.n_frames());
    write_tensor_record(os, {t_len, kNumPitches}, prt.onsets.a);
    write_tensor_record(os, {t_len, kNumPitches}, prt.frames.a);
    if (prt.velocity_one_hot()) {
        std::vector<float> dense(static_cast<size_t>(t_len) * kNumPitches * kNumVelocityClasses,
                                 0.0f);
        for (size_t cell = 0; cell < prt.vel_class.size(); ++cell)
            dense[cell * kNumVelocityClasses + prt.vel_class[cell]] = 1.0f;
        write_tensor_record(os, {t_len, kNumPitches, kNumVelocityClasses}, dense.data());
    } else {
        std::vector<float> f(prt.vel_probs.a.begin(), prt.vel_probs.a.end());
        write_tensor_record(os, {t_len, kNumPitches, kNumVelocityClasses}, f.data());
    }
}

inline PianoRollTensors read_roll_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    TensorData onsets, frames, velocities;
    if (!read_tensor_record(is, onsets) || !read_tensor_record(is, frames) ||
        !read_tensor_record(is, velocities))
        throw std::runtime_error("roll tensor file needs three records: " + path);
    if (onsets.dims.size() != 2 || frames.dims.size() != 2 || velocities.dims.size() != 3)
        throw std::runtime_error("roll tensor file has wrong ranks: " + path);
    if (onsets.dims[1] != kNumPitches || velocities.dims[2] != kNumVelocityClasses)
        throw std::runtime_error("roll tensor file has wrong shape: " + path);
    const int t_len = static_cast<int>(onsets.dims[0]);

    PianoRollTensors out;
    out.onsets = Mat(t_len, kNumPitches);
    out.frames = Mat(t_len, kNumPitches);
    std::copy(onsets.data.begin(), onsets.data.end(), out.onsets.a.begin());
    std::copy(frames.data.begin(), frames.data.end(), out.frames.a.begin());

    // compact exact one-hot velocity rows back to class indices
    bool one_hot = true;
    std::vector<uint8_t> klass(static_cast<size_t>(t_len) * kNumPitches, 0);
    for (size_t cell = 0; cell < klass.size() && one_hot; ++cell) {
        int hit = -1;
        for (int v = 0; v < kNumVelocityClasses; ++v) {
            float x = velocities.data[cell * kNumVelocityClasses + v];
            if (x == 1.0f) {
                if (hit >= 0) {
                    one_hot = false;
                    break;
                }
                hit = v;
            } else if (x != 0.0f) {
                one_hot = false;
                break;
            }
        }
        if (hit < 0) one_hot = false;
        if (one_hot) klass[cell] = static_cast<uint8_t>(hit);
    }
    if (one_hot) {
        out.vel_class = std::move(klass);
    } else {
        out.vel_probs = Tensor3(t_len, kNumPitches, kNumVelocityClasses);
        std::copy(velocities.data.begin(), velocities.data.end(), out.vel_probs.a.begin());
    }
    return out;
}

inline std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(is),
                                std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
}

} // namespace amtapc
