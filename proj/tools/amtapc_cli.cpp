// Command-line surface over the library: style extraction, roll tensors,
// loss reports, synthetic data, training, inference, and the evaluation
// metrics. Numeric settings live in JSON config files so runs are
// reproducible from artifacts alone.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "amtapc/evalkit.hpp"
#include "amtapc/midi.hpp"
#include "amtapc/postproc.hpp"
#include "amtapc/roll.hpp"
#include "amtapc/serial.hpp"
#include "amtapc/style.hpp"
#include "amtapc/tensor_io.hpp"
#include "amtapc/toynet.hpp"
#include "amtapc/wav.hpp"

namespace fs = std::filesystem;
using namespace amtapc;

namespace {

constexpr double kDefaultChromaHop = 0.1; // seconds

std::vector<MidiNote> notes_from_file(const std::string& path) {
    auto parsed = parse_midi(read_file_bytes(path));
    if (parsed.dropped_out_of_range > 0)
        std::cerr << path << ": dropped " << parsed.dropped_out_of_range
                  << " notes outside piano range\n";
    return parsed.notes;
}

bool has_extension(const std::string& path, const char* ext) {
    auto e = fs::path(path).extension().string();
    for (auto& c : e) c = static_cast<char>(std::tolower(c));
    return e == ext;
}

ChromaSequence chroma_from_file(const std::string& path, double hop) {
    if (has_extension(path, ".wav")) {
        WavData w = read_wav(path);
        return chroma_from_audio(w.samples, w.sample_rate, hop);
    }
    return chroma_from_notes(notes_from_file(path), hop);
}

int cmd_style(const std::vector<std::string>& paths, const std::string& average_dir) {
    StyleVector v;
    std::string out_path;
    if (!average_dir.empty()) {
        if (paths.size() != 1)
            throw std::runtime_error("style --average expects one output path");
        out_path = paths[0];
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(average_dir)) {
            if (!e.is_regular_file()) continue;
            if (has_extension(e.path().string(), ".mid") ||
                has_extension(e.path().string(), ".midi"))
                files.push_back(e.path().string());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw std::runtime_error("no MIDI files in " + average_dir);
        std::vector<StyleVector> vs;
        FrameGrid grid;
        for (const auto& f : files) vs.push_back(extract_style_vector(notes_from_file(f), grid));
        v = average_style_vectors(vs);
    } else {
        if (paths.size() != 2)
            throw std::runtime_error("style expects <midi_in> <json_out>");
        out_path = paths[1];
        FrameGrid grid;
        v = extract_style_vector(notes_from_file(paths[0]), grid);
    }
    write_json_file(out_path, style_to_json(v));
    return 0;
}

int cmd_roll(const std::string& midi_in, const std::string& tensor_out, int segment) {
    FrameGrid grid;
    auto notes = notes_from_file(midi_in);
    auto tensors = notes_to_tensors(notes, segment * grid.frames_per_segment, grid);
    write_roll_file(tensor_out, tensors);
    return 0;
}

int cmd_loss(const std::string& pred1_path, const std::string& pred2_path,
             const std::string& truth_path, const std::string& config_path) {
    LossConfig config;
    if (!config_path.empty()) config = loss_config_from_json(read_json_file(config_path));
    auto pred1 = read_roll_file(pred1_path);
    auto pred2 = read_roll_file(pred2_path);
    auto truth = read_roll_file(truth_path);
    auto breakdown = total_loss(pred1, pred2, truth, config);
    std::cout << breakdown_to_json(breakdown).dump(2) << "\n";
    return 0;
}

int cmd_gen(const std::string& out_dir, int n, uint64_t seed) {
    ToyNetConfig cfg;
    auto data = gen_synthetic_dataset(n, seed, cfg);
    save_dataset(out_dir, data, seed, cfg);
    std::cerr << "wrote " << n << " pairs to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& ckpt_out,
              const std::string& config_path) {
    TrainConfig tc;
    LossConfig lc;
    uint64_t init_seed = 1;
    if (!config_path.empty()) {
        json j = read_json_file(config_path);
        tc.lr = j.value("lr", tc.lr);
        tc.epochs = j.value("epochs", tc.epochs);
        tc.seed = j.value("seed", tc.seed);
        init_seed = j.value("init_seed", tc.seed + 1);
        if (j.contains("loss")) lc = loss_config_from_json(j.at("loss"));
    }
    auto dataset = load_dataset(data_dir);
    ToyNetParams params = init_toynet(dataset.cfg, init_seed);
    auto t0 = std::chrono::steady_clock::now();
    auto trace = train(params, dataset.pairs, tc, lc);
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_checkpoint(ckpt_out, params);
    write_trace_csv(ckpt_out + "/trace.csv", trace);
    std::cerr << "trained " << tc.epochs << " epochs in " << dt << " s; loss "
              << trace.front().loss << " -> " << trace.back().loss << "\n";
    return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& features_in,
              const std::string& style_json, const std::string& midi_out,
              const std::string& postproc_path) {
    PostprocConfig pp;
    if (!postproc_path.empty()) pp = postproc_from_json(read_json_file(postproc_path));
    ToyNetParams params = load_checkpoint(ckpt);
    Mat features = read_features_file(features_in);
    StyleVector style = style_from_json(read_json_file(style_json));
    PianoRollTensors pred = infer(params, features, style);
    FrameGrid grid;
    auto notes = decode_and_clean(pred, pp, grid);
    write_file_bytes(midi_out, write_midi(notes));
    std::cerr << "decoded " << notes.size() << " notes\n";
    return 0;
}

int cmd_f1(const std::string& pred_path, const std::string& truth_path) {
    auto pred = read_roll_file(pred_path);
    auto truth = read_roll_file(truth_path);
    std::cout << f1_to_json(f1_scores(pred, truth)).dump(2) << "\n";
    return 0;
}

int cmd_qmax(const std::vector<std::string>& paths, const std::string& params_path,
             const std::string& batch_csv) {
    QmaxParams qp;
    double hop = kDefaultChromaHop;
    if (!params_path.empty()) {
        json j = read_json_file(params_path);
        qp = qmax_params_from_json(j);
        hop = j.value("hop", hop);
    }
    if (!batch_csv.empty()) {
        if (!paths.empty()) throw std::runtime_error("qmax --batch takes no positional paths");
        std::ifstream is(batch_csv);
        if (!is) throw std::runtime_error("cannot open: " + batch_csv);
        std::cout << "a,b,qmax,distance,oti,n_a,n_b\n";
        std::string line;
        double sum_q = 0.0, sum_d = 0.0;
        int n_rows = 0, n_finite = 0;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            auto comma = line.find(',');
            if (comma == std::string::npos)
                throw std::runtime_error("batch csv line needs two paths: " + line);
            std::string a = line.substr(0, comma), b = line.substr(comma + 1);
            auto r = qmax(chroma_from_file(a, hop), chroma_from_file(b, hop), qp);
            std::cout << a << "," << b << "," << r.qmax << ","
                      << (r.infinite ? std::string("inf") : std::to_string(r.distance)) << ","
                      << r.oti << "," << r.n_a << "," << r.n_b << "\n";
            sum_q += r.qmax;
            ++n_rows;
            if (!r.infinite) {
                sum_d += r.distance;
                ++n_finite;
            }
        }
        if (n_rows == 0) throw std::runtime_error("batch csv is empty");
        std::cout << "average,," << sum_q / n_rows << ","
                  << (n_finite ? std::to_string(sum_d / n_finite) : std::string("inf"))
                  << ",,,\n";
        return 0;
    }
    if (paths.size() != 2) throw std::runtime_error("qmax expects <a.wav|a.mid> <b.wav|b.mid>");
    auto r = qmax(chroma_from_file(paths[0], hop), chroma_from_file(paths[1], hop), qp);
    std::cout << qmax_to_json(r).dump(2) << "\n";
    return 0;
}

int cmd_align(const std::string& a_path, const std::string& b_path, const std::string& out_csv) {
    auto a = chroma_from_file(a_path, kDefaultChromaHop);
    auto b = chroma_from_file(b_path, kDefaultChromaHop);
    auto r = dtw_align(a, b);
    std::ofstream os(out_csv);
    if (!os) throw std::runtime_error("cannot open for writing: " + out_csv);
    os << "i,j\n";
    for (auto [i, j] : r.path) os << i << "," << j << "\n";
    std::cout << json{{"cost", r.cost}, {"path_length", r.path.size()}}.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"AMT-APC toy training and evaluation pipeline"};
    app.require_subcommand(1);

    // style
    auto* style = app.add_subcommand("style", "Extract a style vector from a MIDI cover");
    std::vector<std::string> style_paths;
    std::string style_avg;
    style->add_option("paths", style_paths, "<midi_in> <json_out>, or <json_out> with --average");
    style->add_option("--average", style_avg, "average style vectors over a directory of MIDI");

    // roll
    auto* roll = app.add_subcommand("roll", "Write piano-roll tensors for one segment");
    std::string roll_in, roll_out;
    int roll_segment = 0;
    roll->add_option("midi_in", roll_in)->required();
    roll->add_option("tensor_out", roll_out)->required();
    roll->add_option("--segment", roll_segment, "segment index (default 0)");

    // loss
    auto* loss = app.add_subcommand("loss", "Print the loss breakdown as JSON");
    std::string loss_p1, loss_p2, loss_truth, loss_config;
    loss->add_option("pred_h1", loss_p1)->required();
    loss->add_option("pred_h2", loss_p2)->required();
    loss->add_option("truth", loss_truth)->required();
    loss->add_option("--config", loss_config, "loss config JSON");

    // gen
    auto* gen = app.add_subcommand("gen", "Write a synthetic dataset");
    std::string gen_dir;
    int gen_n = 8;
    uint64_t gen_seed = 1;
    gen->add_option("out_dir", gen_dir)->required();
    gen->add_option("--n", gen_n, "number of pairs");
    gen->add_option("--seed", gen_seed, "dataset seed");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the toy network");
    std::string train_dir, train_ckpt, train_config;
    train_cmd->add_option("data_dir", train_dir)->required();
    train_cmd->add_option("ckpt_out", train_ckpt)->required();
    train_cmd->add_option("--config", train_config, "train config JSON");

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "Run inference and write cleaned MIDI");
    std::string inf_ckpt, inf_features, inf_style, inf_midi, inf_pp;
    infer_cmd->add_option("ckpt", inf_ckpt)->required();
    infer_cmd->add_option("features_in", inf_features)->required();
    infer_cmd->add_option("style_json", inf_style)->required();
    infer_cmd->add_option("midi_out", inf_midi)->required();
    infer_cmd->add_option("--postproc", inf_pp, "post-processing config JSON");

    // f1
    auto* f1 = app.add_subcommand("f1", "Print F1 scores between two tensor files");
    std::string f1_pred, f1_truth;
    f1->add_option("pred_tensor", f1_pred)->required();
    f1->add_option("truth_tensor", f1_truth)->required();

    // qmax
    auto* qmax_cmd = app.add_subcommand("qmax", "Cover-similarity Q_max between two files");
    std::vector<std::string> qmax_paths;
    std::string qmax_params, qmax_batch;
    qmax_cmd->add_option("paths", qmax_paths, "<a.wav|a.mid> <b.wav|b.mid>");
    qmax_cmd->add_option("--params", qmax_params, "Q_max parameter JSON");
    qmax_cmd->add_option("--batch", qmax_batch, "CSV of path pairs; emits a summary CSV");

    // align
    auto* align = app.add_subcommand("align", "DTW warping path between two files");
    std::string align_a, align_b, align_out;
    align->add_option("a", align_a)->required();
    align->add_option("b", align_b)->required();
    align->add_option("path_out", align_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (style->parsed()) return cmd_style(style_paths, style_avg);
        if (roll->parsed()) return cmd_roll(roll_in, roll_out, roll_segment);
        if (loss->parsed()) return cmd_loss(loss_p1, loss_p2, loss_truth, loss_config);
        if (gen->parsed()) return cmd_gen(gen_dir, gen_n, gen_seed);
        if (train_cmd->parsed()) return cmd_train(train_dir, train_ckpt, train_config);
        if (infer_cmd->parsed())
            return cmd_infer(inf_ckpt, inf_features, inf_style, inf_midi, inf_pp);
        if (f1->parsed()) return cmd_f1(f1_pred, f1_truth);
        if (qmax_cmd->parsed()) return cmd_qmax(qmax_paths, qmax_params, qmax_batch);
        if (align->parsed()) return cmd_align(align_a, align_b, align_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
