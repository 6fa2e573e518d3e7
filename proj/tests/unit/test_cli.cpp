#include <doctest.h>

#include <fstream>
#include <sstream>

#include "crnn/audio.hpp"
#include "crnn/io_util.hpp"
#include "crnn/midi.hpp"
#include "crnn_cli/cli.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace crnn;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::uint8_t> bytes_of(const fs::path& p) { return read_file(p); }

// Small network and short clips so the whole command chain runs in seconds.
const char* kConfig = R"(network.conv_stack = 4:5, 8:5
network.convlstm_stack = 8:3
network.time_conv = 8:3
trainer.segment_length = 32
trainer.lanes = 2
trainer.steps = 40
trainer.lr = 0.005
trainer.threads = 1
score.clip_seconds = 1.5
score.notes_min = 2
score.notes_max = 4
score.duration_max = 0.6
)";

// Each fixture gets a fresh directory of its own.
struct Fixture {
    fs::path dir;
    fs::path cfg;
    Fixture() {
        static int counter = 0;
        dir = testutil::scratch_dir("cli" + std::to_string(counter++));
        cfg = dir / "tiny.cfg";
        std::ofstream(cfg) << kConfig;
    }
};

// One trained model shared by the transcribe cases.
const Fixture& trained() {
    static const Fixture f = [] {
        Fixture f;
        REQUIRE(run({"synth", "--config", f.cfg.string(), "--out", (f.dir / "data").string(), "--clips", "2",
                     "--seed", "3"}).code == 0);
        const auto r = run({"train", "--config", f.cfg.string(), "--data", (f.dir / "data/manifest.csv").string(),
                            "--out", (f.dir / "model.crnp").string(), "--seed", "1"});
        REQUIRE(r.code == 0);
        return f;
    }();
    return f;
}

}  // namespace

TEST_CASE("help and usage errors") {
    auto r = run({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("transcribe") != std::string::npos);
    CHECK(run({}).code == cli::kInputError);
    CHECK(run({"frobnicate"}).code == cli::kInputError);
    CHECK(run({"transcribe", "--in", "x.wav"}).code == cli::kInputError);
}

TEST_CASE("synth writes counted files and a manifest") {
    Fixture f;
    const auto out = f.dir / "five";
    auto r = run({"synth", "--config", f.cfg.string(), "--out", out.string(), "--clips", "5", "--seed", "9"});
    REQUIRE(r.code == 0);
    int wav = 0, mid = 0, csv = 0;
    for (const auto& e : fs::directory_iterator(out)) {
        const auto ext = e.path().extension();
        wav += ext == ".wav";
        mid += ext == ".mid";
        csv += ext == ".csv";
    }
    CHECK(wav == 5);
    CHECK(mid == 5);
    CHECK(csv == 1);
    std::ifstream m(out / "manifest.csv");
    std::string header;
    std::getline(m, header);
    CHECK(header == "clip_id,wav_path,midi_path,seed");
}

TEST_CASE("synth with zero clips writes only the header") {
    Fixture f;
    REQUIRE(run({"synth", "--out", (f.dir / "zero").string(), "--clips", "0"}).code == 0);
    const auto b = bytes_of(f.dir / "zero/manifest.csv");
    CHECK(std::string(b.begin(), b.end()) == "clip_id,wav_path,midi_path,seed\n");
}

TEST_CASE("synth is deterministic in the seed") {
    Fixture f;
    for (const char* d : {"a", "b"})
        REQUIRE(run({"synth", "--config", f.cfg.string(), "--out", (f.dir / d).string(), "--clips", "2", "--seed", "4"})
                    .code == 0);
    for (const char* name : {"manifest.csv", "clip_00000.wav", "clip_00001.wav", "clip_00000.mid", "clip_00001.mid"})
        CHECK(bytes_of(f.dir / "a" / name) == bytes_of(f.dir / "b" / name));
}

TEST_CASE("synth into an unwritable location exits 2") {
    Fixture f;
    std::ofstream(f.dir / "plain") << "x";
    const auto r = run({"synth", "--out", (f.dir / "plain/sub").string(), "--clips", "1"});
    CHECK(r.code == cli::kInputError);
}

TEST_CASE("train on an empty manifest exits 2") {
    Fixture f;
    std::ofstream(f.dir / "empty.csv") << "clip_id,wav_path,midi_path\n";
    const auto r = run({"train", "--config", f.cfg.string(), "--data", (f.dir / "empty.csv").string(), "--out",
                        (f.dir / "m.crnp").string()});
    CHECK(r.code == cli::kInputError);
    CHECK(r.err.find("empty dataset") != std::string::npos);
}

TEST_CASE("train with an unknown config key exits 3") {
    Fixture f;
    std::ofstream(f.dir / "bad.cfg") << "trainer.speed = 11\n";
    const auto r = run({"train", "--config", (f.dir / "bad.cfg").string(), "--data", "whatever.csv", "--out",
                        (f.dir / "m.crnp").string()});
    CHECK(r.code == cli::kConfigError);
    CHECK(r.err.find("trainer.speed") != std::string::npos);
}

TEST_CASE("train is deterministic and writes the loss curve") {
    const auto& f = trained();
    const auto again = f.dir / "again.crnp";
    REQUIRE(run({"train", "--config", f.cfg.string(), "--data", (f.dir / "data/manifest.csv").string(), "--out",
                 again.string(), "--seed", "1"}).code == 0);
    CHECK(bytes_of(again) == bytes_of(f.dir / "model.crnp"));
    const auto csv = bytes_of(f.dir / "model.crnp.loss.csv");
    std::istringstream lines(std::string(csv.begin(), csv.end()));
    std::string line;
    std::getline(lines, line);
    CHECK(line == "step,loss");
    int rows = 0;
    while (std::getline(lines, line)) ++rows;
    CHECK(rows == 40);
}

TEST_CASE("transcribe silence gives an empty MIDI file") {
    const auto& f = trained();
    AudioBuffer silence;
    silence.sample_rate = 22050;
    silence.samples.assign(22050, 0.0);
    write_wav(f.dir / "silence.wav", silence);
    const auto r = run({"transcribe", "--model", (f.dir / "model.crnp").string(), "--in",
                        (f.dir / "silence.wav").string(), "--out", (f.dir / "silence.mid").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("notes: 0") != std::string::npos);
    CHECK(r.out.find("real-time factor") != std::string::npos);
    CHECK(read_smf(bytes_of(f.dir / "silence.mid")).notes.empty());
}

TEST_CASE("transcribe output does not depend on the chunk size") {
    const auto& f = trained();
    const auto wav = (f.dir / "data/clip_00000.wav").string(), model = (f.dir / "model.crnp").string();
    // Low thresholds so the barely trained model still emits notes.
    for (const char* chunk : {"1", "10000"})
        REQUIRE(run({"transcribe", "--model", model, "--in", wav, "--out", (f.dir / ("c" + std::string(chunk) + ".mid")).string(),
                     "--chunk", chunk, "--theta-art", "0.05", "--theta-sus", "0.05"}).code == 0);
    const auto a = bytes_of(f.dir / "c1.mid");
    CHECK(a == bytes_of(f.dir / "c10000.mid"));
    CHECK_FALSE(read_smf(a).notes.empty());
}

TEST_CASE("transcribe with a missing model exits 3 naming the path") {
    Fixture f;
    const auto missing = (f.dir / "nope.crnp").string();
    const auto r = run({"transcribe", "--model", missing, "--in", "x.wav", "--out", (f.dir / "x.mid").string()});
    CHECK(r.code == cli::kConfigError);
    CHECK(r.err.find(missing) != std::string::npos);
}

TEST_CASE("transcribe with a corrupt model exits 3, an unreadable wav exits 2") {
    const auto& f = trained();
    auto model = bytes_of(f.dir / "model.crnp");
    model[model.size() / 2] ^= 0xFF;
    write_file_atomic(f.dir / "corrupt.crnp", model);
    CHECK(run({"transcribe", "--model", (f.dir / "corrupt.crnp").string(), "--in", "x.wav", "--out", "x.mid"}).code ==
          cli::kConfigError);
    std::ofstream(f.dir / "junk.wav") << "not a wav";
    CHECK(run({"transcribe", "--model", (f.dir / "model.crnp").string(), "--in", (f.dir / "junk.wav").string(), "--out",
               (f.dir / "junk.mid").string()}).code == cli::kInputError);
}

TEST_CASE("eval of a file against itself is perfect") {
    const auto& f = trained();
    const auto mid = (f.dir / "data/clip_00000.mid").string();
    const auto r = run({"eval", "--pred", mid, "--ref", mid});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("metric,precision,recall,f_measure,tp,fp,fn") == 0);
    CHECK(r.out.find("framewise,1.000000,1.000000,1.000000") != std::string::npos);
    CHECK(r.out.find("note_onset,1.000000,1.000000,1.000000") != std::string::npos);
    CHECK(r.out.find("note_onset_offset,1.000000,1.000000,1.000000") != std::string::npos);
}

TEST_CASE("eval of an empty prediction has zero recall") {
    const auto& f = trained();
    write_file_atomic(f.dir / "empty.mid", write_smf(MidiDocument{}));
    const auto r = run({"eval", "--pred", (f.dir / "empty.mid").string(), "--ref",
                        (f.dir / "data/clip_00000.mid").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("framewise,1.000000,0.000000,0.000000") != std::string::npos);
    CHECK(r.out.find("note_onset,1.000000,0.000000,0.000000") != std::string::npos);
}

TEST_CASE("eval in directory mode") {
    const auto& f = trained();
    fs::create_directories(f.dir / "pred");
    fs::copy_file(f.dir / "data/clip_00000.mid", f.dir / "pred/clip_00000.mid", fs::copy_options::overwrite_existing);
    fs::remove(f.dir / "pred/clip_00001.mid");
    auto r = run({"eval", "--pred", (f.dir / "pred").string(), "--ref", (f.dir / "data").string()});
    CHECK(r.code == cli::kInputError);
    CHECK(r.err.find("clip_00001") != std::string::npos);
    fs::copy_file(f.dir / "data/clip_00001.mid", f.dir / "pred/clip_00001.mid");
    r = run({"eval", "--pred", (f.dir / "pred").string(), "--ref", (f.dir / "data").string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("note_onset,1.000000,1.000000,1.000000") != std::string::npos);
}

TEST_CASE("eval on an unreadable file exits 2") {
    Fixture f;
    std::ofstream(f.dir / "junk.mid") << "junk";
    CHECK(run({"eval", "--pred", (f.dir / "junk.mid").string(), "--ref", (f.dir / "junk.mid").string()}).code ==
          cli::kInputError);
    CHECK(run({"eval", "--pred", (f.dir / "none.mid").string(), "--ref", (f.dir / "junk.mid").string()}).code ==
          cli::kInputError);
}
