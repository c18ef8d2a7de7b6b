#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "amtapc/midi.hpp"
#include "amtapc/tensor_io.hpp"
#include "amtapc/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace amtapc;

namespace {

const std::string kCli = AMTAPC_CLI_PATH;

fs::path work_dir() {
    auto dir = fs::temp_directory_path() / "amtapc_cli_test";
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& args, std::string* out = nullptr) {
    auto dir = work_dir();
    std::string cmd = kCli + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " +
                      (dir / "stderr.txt").string();
    int rc = std::system(cmd.c_str());
    if (out) {
        std::ifstream is(dir / "stdout.txt");
        std::stringstream ss;
        ss << is.rdbuf();
        *out = ss.str();
    }
    return rc == 0 ? 0 : 1;
}

std::string file_text(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_one_note_midi(const fs::path& p) {
    write_file_bytes(p.string(), write_midi({{0.5, 1.0, 60, 90}}));
}

} // namespace

TEST_CASE("style subcommand writes the documented JSON", "[cli]") {
    auto dir = work_dir();
    write_one_note_midi(dir / "one.mid");
    auto out = (dir / "style.json").string();
    REQUIRE(run("style " + (dir / "one.mid").string() + " " + out) == 0);
    json j = json::parse(file_text(out));
    REQUIRE(j.contains("onset_rate"));
    REQUIRE(j.contains("velocity"));
    REQUIRE(j.contains("pitch"));
    // single note: velocity and pitch mass sits in bin 3
    CHECK(j["velocity"][3].get<double>() == 1.0);
    CHECK(j["pitch"][3].get<double>() == 1.0);
}

TEST_CASE("style output is identical across two runs", "[cli]") {
    auto dir = work_dir();
    write_one_note_midi(dir / "det.mid");
    auto a = (dir / "det_a.json").string();
    auto b = (dir / "det_b.json").string();
    REQUIRE(run("style " + (dir / "det.mid").string() + " " + a) == 0);
    REQUIRE(run("style " + (dir / "det.mid").string() + " " + b) == 0);
    CHECK(file_text(a) == file_text(b));
}

TEST_CASE("style --average averages over a directory", "[cli]") {
    auto dir = work_dir() / "covers";
    fs::create_directories(dir);
    write_file_bytes((dir / "a.mid").string(), write_midi({{0.0, 0.5, 60, 90}}));
    write_file_bytes((dir / "b.mid").string(), write_midi({{0.0, 0.5, 72, 30}, {1.0, 1.5, 60, 90}}));
    auto out = (work_dir() / "avg.json").string();
    REQUIRE(run("style " + out + " --average " + dir.string()) == 0);
    json j = json::parse(file_text(out));
    double sum = 0.0;
    for (auto& v : j["pitch"]) sum += v.get<double>();
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("roll then f1 against itself is perfect", "[cli]") {
    auto dir = work_dir();
    write_one_note_midi(dir / "roll.mid");
    auto tens = (dir / "roll.apct").string();
    REQUIRE(run("roll " + (dir / "roll.mid").string() + " " + tens) == 0);
    std::string out;
    REQUIRE(run("f1 " + tens + " " + tens, &out) == 0);
    json j = json::parse(out);
    CHECK(j["onset_f1"].get<double>() == 1.0);
    CHECK(j["frame_f1"].get<double>() == 1.0);
    CHECK(j["velocity_f1"].get<double>() == 1.0);
    CHECK(j["average"].get<double>() == 1.0);
}

TEST_CASE("loss of a perfect prediction is near zero", "[cli]") {
    auto dir = work_dir();
    write_one_note_midi(dir / "loss.mid");
    auto tens = (dir / "loss.apct").string();
    REQUIRE(run("roll " + (dir / "loss.mid").string() + " " + tens) == 0);
    std::string out;
    REQUIRE(run("loss " + tens + " " + tens + " " + tens, &out) == 0);
    json j = json::parse(out);
    // soft onset targets keep a small entropy floor even at a perfect match
    CHECK(j["L"].get<double>() < 0.01);
    CHECK(j["h1"]["frame"].get<double>() < 1e-6);
    CHECK(j["h1"]["velocity"].get<double>() < 1e-6);
    CHECK(j["masked_counts"]["onsets"].get<int>() > 0);
}

TEST_CASE("gen, train, infer pipeline produces artifacts", "[cli]") {
    auto dir = work_dir() / "pipeline";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto data = (dir / "data").string();
    REQUIRE(run("gen " + data + " --n 2 --seed 5") == 0);
    CHECK(fs::exists(dir / "data" / "dataset.json"));
    CHECK(fs::exists(dir / "data" / "pair_0000.features.apct"));
    CHECK(fs::exists(dir / "data" / "pair_0001.style.json"));

    json cfg = {{"lr", 1e-3}, {"epochs", 3}, {"seed", 1}};
    std::ofstream(dir / "train.json") << cfg.dump();
    auto ckpt = (dir / "ckpt").string();
    REQUIRE(run("train " + data + " " + ckpt + " --config " + (dir / "train.json").string()) == 0);
    CHECK(fs::exists(dir / "ckpt" / "manifest.json"));
    CHECK(fs::exists(dir / "ckpt" / "trace.csv"));

    auto midi_out = (dir / "out.mid").string();
    REQUIRE(run("infer " + ckpt + " " + data + "/pair_0000.features.apct " + data +
                "/pair_0000.style.json " + midi_out) == 0);
    CHECK(fs::exists(midi_out));
    // output parses as MIDI
    auto parsed = parse_midi(read_file_bytes(midi_out));
    CHECK(parsed.dropped_out_of_range == 0);
}

TEST_CASE("qmax self comparison on a wav file", "[cli]") {
    auto dir = work_dir();
    std::vector<double> pcm(32000);
    for (size_t i = 0; i < pcm.size(); ++i) {
        double t = static_cast<double>(i) / 8000.0;
        pcm[i] = 0.5 * std::sin(2.0 * M_PI * 440.0 * t) + 0.3 * std::sin(2.0 * M_PI * 660.0 * t * (t < 2.0 ? 1.0 : 1.5));
    }
    auto wav = (dir / "self.wav").string();
    write_wav(wav, pcm, 8000);
    std::string out;
    REQUIRE(run("qmax " + wav + " " + wav, &out) == 0);
    json j = json::parse(out);
    int n = j["n_b"].get<int>();
    REQUIRE(j["qmax"].get<double>() > 0.0);
    // self distance bound: sqrt(N) / (N - m * tau)
    CHECK(j["distance"].get<double>() <= std::sqrt(static_cast<double>(n)) / (n - 9));
}

TEST_CASE("qmax --batch emits a summary with an average row", "[cli]") {
    auto dir = work_dir();
    std::vector<MidiNote> tune;
    for (int i = 0; i < 30; ++i)
        tune.push_back({i * 0.2, i * 0.2 + 0.18, 52 + (i * 5) % 24, 80});
    write_file_bytes((dir / "qb.mid").string(), write_midi(tune));
    std::ofstream(dir / "pairs.csv") << (dir / "qb.mid").string() << ","
                                     << (dir / "qb.mid").string() << "\n";
    std::string out;
    REQUIRE(run("qmax --batch " + (dir / "pairs.csv").string(), &out) == 0);
    CHECK(out.find("a,b,qmax,distance,oti,n_a,n_b") != std::string::npos);
    CHECK(out.find("average,") != std::string::npos);
}

TEST_CASE("align writes a warping path csv", "[cli]") {
    auto dir = work_dir();
    std::vector<MidiNote> tune;
    for (int i = 0; i < 20; ++i) tune.push_back({i * 0.2, i * 0.2 + 0.18, 60 + i % 12, 80});
    write_file_bytes((dir / "al.mid").string(), write_midi(tune));
    auto csv = (dir / "path.csv").string();
    std::string out;
    REQUIRE(run("align " + (dir / "al.mid").string() + " " + (dir / "al.mid").string() + " " + csv,
                &out) == 0);
    json j = json::parse(out);
    CHECK(j["cost"].get<double>() == Catch::Approx(0.0).margin(1e-9));
    auto text = file_text(csv);
    CHECK(text.find("i,j") == 0);
    CHECK(text.find("0,0") != std::string::npos);
}

TEST_CASE("errors exit non-zero with a one-line message", "[cli]") {
    auto dir = work_dir();
    CHECK(run("style " + (dir / "missing.mid").string() + " " + (dir / "x.json").string()) == 1);
    CHECK(run("f1 nope.apct nope.apct") == 1);
    CHECK(run("roll --bogus-flag a b") == 1);
    auto err = file_text(dir / "stderr.txt");
    CHECK(!err.empty());
}
