#pragma once

// JSON and on-disk layouts: style vectors, configs, loss breakdowns, metric
// results, dataset directories, and checkpoints.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "amtapc/evalkit.hpp"
#include "amtapc/loss.hpp"
#include "amtapc/postproc.hpp"
#include "amtapc/style.hpp"
#include "amtapc/tensor_io.hpp"
#include "amtapc/toynet.hpp"

namespace amtapc {

using nlohmann::json;

inline json style_to_json(const StyleVector& v) {
    json j;
    j["onset_rate"] = std::vector<double>(v.values.begin(), v.values.begin() + 8);
    j["velocity"] = std::vector<double>(v.values.begin() + 8, v.values.begin() + 16);
    j["pitch"] = std::vector<double>(v.values.begin() + 16, v.values.end());
    return j;
}

inline StyleVector style_from_json(const json& j) {
    StyleVector v;
    auto block = [&](const char* key, int offset) {
        auto arr = j.at(key).get<std::vector<double>>();
        if (arr.size() != 8) throw std::runtime_error("style json: block must have 8 values");
        std::copy(arr.begin(), arr.end(), v.values.begin() + offset);
    };
    block("onset_rate", 0);
    block("velocity", 8);
    block("pitch", 16);
    return v;
}

inline json loss_config_to_json(const LossConfig& c) {
    return json{{"beta", c.beta},
                {"theta_onset", c.theta_onset},
                {"theta_frame", c.theta_frame},
                {"theta_velocity", c.theta_velocity},
                {"rng_seed", c.rng_seed}};
}

inline LossConfig loss_config_from_json(const json& j) {
    LossConfig c;
    c.beta = j.value("beta", c.beta);
    c.theta_onset = j.value("theta_onset", c.theta_onset);
    c.theta_frame = j.value("theta_frame", c.theta_frame);
    c.theta_velocity = j.value("theta_velocity", c.theta_velocity);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    return c;
}

inline json breakdown_to_json(const LossBreakdown& b) {
    return json{{"L", b.total},
                {"L1", b.l1},
                {"L2", b.l2},
                {"h1", {{"onset", b.h1.onset}, {"frame", b.h1.frame}, {"velocity", b.h1.velocity}}},
                {"h2", {{"onset", b.h2.onset}, {"frame", b.h2.frame}, {"velocity", b.h2.velocity}}},
                {"masked_counts",
                 {{"onsets", b.masked_onsets},
                  {"frames", b.masked_frames},
                  {"velocities", b.masked_velocities}}},
                {"empty_mask_warning", b.empty_mask_warning}};
}

inline PostprocConfig postproc_from_json(const json& j) {
    PostprocConfig c;
    c.min_note_seconds = j.value("min_note_seconds", c.min_note_seconds);
    c.onset_threshold = j.value("onset_threshold", c.onset_threshold);
    return c;
}

inline json f1_to_json(const F1Scores& f) {
    return json{{"onset_f1", f.onset},
                {"frame_f1", f.frame},
                {"velocity_f1", f.velocity},
                {"average", f.average}};
}

inline json qmax_to_json(const QmaxResult& r) {
    json j{{"qmax", r.qmax}, {"oti", r.oti}, {"n_a", r.n_a}, {"n_b", r.n_b},
           {"infinite", r.infinite}};
    if (r.infinite)
        j["distance"] = nullptr;
    else
        j["distance"] = r.distance;
    return j;
}

inline QmaxParams qmax_params_from_json(const json& j) {
    QmaxParams p;
    p.kappa = j.value("kappa", p.kappa);
    p.gamma_o = j.value("gamma_o", p.gamma_o);
    p.gamma_e = j.value("gamma_e", p.gamma_e);
    p.m_embed = j.value("m_embed", p.m_embed);
    p.tau_lag = j.value("tau_lag", p.tau_lag);
    return p;
}

inline json toynet_config_to_json(const ToyNetConfig& c) {
    return json{{"T", c.t_len}, {"F", c.f_len}, {"Z", c.z}, {"G", c.g}, {"F_in", c.f_in}};
}

inline ToyNetConfig toynet_config_from_json(const json& j) {
    ToyNetConfig c;
    c.t_len = j.value("T", c.t_len);
    c.f_len = j.value("F", c.f_len);
    c.z = j.value("Z", c.z);
    c.g = j.value("G", c.g);
    c.f_in = j.value("F_in", c.f_in);
    c.validate();
    return c;
}

inline json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    json j;
    is >> j;
    return j;
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// checkpoints: one APCT file per parameter tensor plus manifest.json
// ---------------------------------------------------------------------------

inline void save_checkpoint(const std::string& dir, ToyNetParams& params) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["config"] = toynet_config_to_json(params.cfg);
    json tensors = json::array();
    for (auto& ref : tensor_refs(params)) {
        tensors.push_back(ref.name);
        write_tensor_file(dir + "/" + ref.name + ".apct", ref.dims, *ref.data);
    }
    manifest["tensors"] = tensors;
    write_json_file(dir + "/manifest.json", manifest);
}

inline ToyNetParams load_checkpoint(const std::string& dir) {
    json manifest = read_json_file(dir + "/manifest.json");
    ToyNetConfig cfg = toynet_config_from_json(manifest.at("config"));
    ToyNetParams params = init_toynet(cfg, 0);
    for (auto& ref : tensor_refs(params)) {
        TensorData t = read_tensor_file(dir + "/" + ref.name + ".apct");
        size_t count = 1;
        for (uint32_t d : t.dims) count *= d;
        if (count != ref.data->size())
            throw std::runtime_error("checkpoint tensor " + ref.name + " has wrong size");
        std::copy(t.data.begin(), t.data.end(), ref.data->begin());
    }
    return params;
}

inline void write_trace_csv(const std::string& path, const std::vector<EpochStats>& trace) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "epoch,L,L1,L2\n";
    os.precision(17);
    for (const auto& s : trace) os << s.epoch << "," << s.loss << "," << s.l1 << "," << s.l2 << "\n";
}

// ---------------------------------------------------------------------------
// synthetic dataset directory layout
// ---------------------------------------------------------------------------

inline std::string pair_stem(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "pair_%04d", index);
    return buf;
}

inline void save_dataset(const std::string& dir, const std::vector<SyntheticPair>& data,
                         uint64_t seed, const ToyNetConfig& cfg) {
    std::filesystem::create_directories(dir);
    json meta{{"n_pairs", data.size()}, {"seed", seed}, {"config", toynet_config_to_json(cfg)}};
    write_json_file(dir + "/dataset.json", meta);
    for (size_t i = 0; i < data.size(); ++i) {
        const std::string stem = dir + "/" + pair_stem(static_cast<int>(i));
        write_tensor_file(stem + ".features.apct",
                          {static_cast<uint32_t>(data[i].features.nr),
                           static_cast<uint32_t>(data[i].features.nc)},
                          data[i].features.a);
        write_roll_file(stem + ".truth.apct", data[i].target);
        write_json_file(stem + ".style.json", style_to_json(data[i].style));
        write_file_bytes(stem + ".cover.mid", write_midi(data[i].cover_notes));
        write_file_bytes(stem + ".original.mid", write_midi(data[i].original_notes));
    }
}

inline Mat read_features_file(const std::string& path) {
    TensorData t = read_tensor_file(path);
    if (t.dims.size() != 2) throw std::runtime_error("features tensor must be rank 2: " + path);
    Mat m(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]));
    std::copy(t.data.begin(), t.data.end(), m.a.begin());
    return m;
}

struct LoadedDataset {
    std::vector<SyntheticPair> pairs;
    ToyNetConfig cfg;
    uint64_t seed = 0;
};

inline LoadedDataset load_dataset(const std::string& dir) {
    json meta = read_json_file(dir + "/dataset.json");
    LoadedDataset out;
    out.cfg = toynet_config_from_json(meta.at("config"));
    out.seed = meta.value("seed", 0);
    int n = meta.at("n_pairs").get<int>();
    for (int i = 0; i < n; ++i) {
        const std::string stem = dir + "/" + pair_stem(i);
        SyntheticPair pair;
        pair.features = read_features_file(stem + ".features.apct");
        pair.target = read_roll_file(stem + ".truth.apct");
        pair.style = style_from_json(read_json_file(stem + ".style.json"));
        pair.cover_notes = parse_midi(read_file_bytes(stem + ".cover.mid")).notes;
        out.pairs.push_back(std::move(pair));
    }
    return out;
}

} // namespace amtapc
