#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>

#include "crnn/config.hpp"
#include "crnn/error.hpp"
#include "crnn/eval.hpp"
#include "crnn/io_util.hpp"
#include "crnn/midi.hpp"
#include "crnn/pipeline.hpp"
#include "crnn/synth.hpp"
#include "crnn/trainer.hpp"

namespace fs = std::filesystem;

namespace crnn::cli {

namespace {

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

PipelineConfig load_config(const std::string& path) {
    PipelineConfig cfg = path.empty() ? PipelineConfig{} : PipelineConfig::load(path);
    cfg.validate();
    return cfg;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        std::string cell = line.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(std::move(cell));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

struct ManifestRow {
    std::string id;
    fs::path wav, midi;
};

std::vector<ManifestRow> read_manifest(const fs::path& path) {
    const auto bytes = read_file(path);
    const std::string text(bytes.begin(), bytes.end());
    const fs::path base = path.parent_path();
    std::vector<ManifestRow> rows;
    std::size_t start = 0, line_no = 0;
    bool header = true;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = text.substr(start, nl - start);
        start = nl + 1;
        ++line_no;
        if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
        const auto cells = split_csv(line);
        if (header) {
            header = false;
            if (cells.size() < 3 || cells[0] != "clip_id" || cells[1] != "wav_path" || cells[2] != "midi_path")
                throw FormatError(path.string() + ": manifest header must start with clip_id,wav_path,midi_path");
            continue;
        }
        if (cells.size() < 3)
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected at least 3 columns");
        auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
        rows.push_back({cells[0], resolve(cells[1]), resolve(cells[2])});
    }
    return rows;
}

MidiDocument read_midi_file(const fs::path& p) { return read_smf(read_file(p)); }

/// Sustain-plane raster at fps, rows = MIDI pitch - 21. Out-of-range pitches are ignored.
std::vector<double> raster(const MidiDocument& doc, double fps, std::size_t n_frames) {
    std::vector<double> plane(static_cast<std::size_t>(kPitchCount) * n_frames, 0.0);
    for (const auto& n : seconds_to_frames(doc.notes, fps, 0.5 * doc.seconds_per_tick())) {
        const int row = n.pitch - kLowestPitch;
        if (row < 0 || row >= kPitchCount) continue;
        for (int t = std::max(0, n.onset_frame); t < n.offset_frame && static_cast<std::size_t>(t) < n_frames; ++t)
            plane[static_cast<std::size_t>(row) * n_frames + static_cast<std::size_t>(t)] = 1.0;
    }
    return plane;
}

struct EvalTotals {
    PrfReport frame, onset, onset_offset;
    EvalTotals() { frame.tp = frame.fp = frame.fn = onset.tp = onset.fp = onset.fn = 0; onset_offset = onset; }
};

void score_pair(const MidiDocument& pred, const MidiDocument& ref, double fps, EvalTotals& tot) {
    int frames = 0;
    for (const auto* doc : {&pred, &ref})
        for (const auto& n : seconds_to_frames(doc->notes, fps, 0.5 * doc->seconds_per_tick())) frames = std::max(frames, n.offset_frame);
    const auto n_frames = static_cast<std::size_t>(frames);
    tot.frame += framewise_prf(raster(pred, fps, n_frames), raster(ref, fps, n_frames));
    tot.onset += note_onset_prf(pred.notes, ref.notes);
    tot.onset_offset += note_onset_offset_prf(pred.notes, ref.notes);
}

}  // namespace

void cmd_transcribe(const TranscribeArgs& a, std::ostream& out) {
    if (!fs::is_regular_file(a.model)) throw ConfigError("model file not found: " + a.model);
    const auto bytes = read_file(a.model);
    PipelineConfig cfg;
    try {
        cfg = PipelineConfig::parse(read_model_config_text(bytes), a.model);
    } catch (const FormatError& e) {
        throw ConfigError(std::string("unreadable model file: ") + e.what());
    }
    if (a.theta_art) cfg.decoder.theta_art = *a.theta_art;
    if (a.theta_sus) cfg.decoder.theta_sus = *a.theta_sus;
    cfg.validate();
    Parameters params;
    try {
        params = load_parameters(bytes, cfg.network);
    } catch (const FormatError& e) {
        throw ConfigError(std::string("unreadable model file: ") + e.what());
    }

    const auto t0 = std::chrono::steady_clock::now();
    const auto res = transcribe_file(a.in, cfg, params, a.chunk);
    write_file_atomic(a.out, write_smf(res.midi));
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    out << "notes: " << res.midi.notes.size() << "\n";
    out << "audio seconds: " << fixed(res.audio_seconds, 3) << "\n";
    out << "real-time factor: " << (res.audio_seconds > 0 ? fixed(elapsed / res.audio_seconds) : "n/a") << "\n";
}

void cmd_train(const TrainArgs& a, std::ostream& out) {
    const PipelineConfig cfg = load_config(a.config);
    const auto rows = read_manifest(a.data);
    if (rows.empty()) throw FormatError("empty dataset: " + a.data + " lists no clips");

    std::vector<TrainingClip> clips;
    clips.reserve(rows.size());
    for (const auto& r : rows) {
        const AudioBuffer audio = read_wav(r.wav);
        const MidiDocument midi = read_midi_file(r.midi);
        clips.push_back(build_training_clip(r.id, audio, midi.notes, cfg));
        if (clips.back().inputs.empty()) throw FormatError(r.wav.string() + ": shorter than one frame");
    }

    const std::string model_text = cfg.model_text();
    TrainHooks hooks;
    hooks.on_checkpoint = [&](std::size_t step, const Parameters& p) {
        write_file_atomic(a.out + ".step" + std::to_string(step), save_parameters(p, cfg.network, model_text));
    };
    TrainResult res;
    try {
        res = train(clips, cfg.network, cfg.trainer, a.seed, hooks);
    } catch (const TrainingError& e) {
        throw FormatError(std::string("training failed: ") + e.what());
    }
    write_file_atomic(a.out, save_parameters(res.params, cfg.network, model_text));

    std::string csv = "step,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < res.loss_curve.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i + 1, res.loss_curve[i]);
        csv += buf;
    }
    write_file_atomic(a.loss_csv.empty() ? a.out + ".loss.csv" : a.loss_csv, csv);

    out << "clips: " << clips.size() << "\n";
    out << "steps: " << res.loss_curve.size() << "\n";
    if (!res.loss_curve.empty()) {
        out << "initial loss: " << fixed(res.loss_curve.front(), 6) << "\n";
        out << "final loss: " << fixed(res.loss_curve.back(), 6) << "\n";
    }
}

void cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    if (!(a.frame_rate > 0)) throw ConfigError("--frame-rate must be positive");
    EvalTotals tot;
    const bool pred_dir = fs::is_directory(a.pred), ref_dir = fs::is_directory(a.ref);
    if (pred_dir != ref_dir) throw FormatError("--pred and --ref must both be files or both be directories");
    if (!pred_dir) {
        score_pair(read_midi_file(a.pred), read_midi_file(a.ref), a.frame_rate, tot);
    } else {
        auto list = [](const fs::path& dir) {
            std::map<std::string, fs::path> m;
            for (const auto& e : fs::directory_iterator(dir)) {
                const auto ext = e.path().extension().string();
                if (e.is_regular_file() && (ext == ".mid" || ext == ".midi")) m[e.path().stem().string()] = e.path();
            }
            return m;
        };
        const auto preds = list(a.pred), refs = list(a.ref);
        for (const auto& [name, path] : preds)
            if (!refs.count(name)) err << "warning: prediction without reference: " << name << "\n";
        for (const auto& [name, path] : refs) {
            const auto it = preds.find(name);
            if (it == preds.end()) throw FormatError("missing prediction for " + name);
            score_pair(read_midi_file(it->second), read_midi_file(path), a.frame_rate, tot);
        }
    }
    out << prf_csv_header() << "\n";
    auto finish = [](const PrfReport& r) { return PrfReport::from_counts(r.tp, r.fp, r.fn); };
    out << prf_csv_row("framewise", finish(tot.frame)) << "\n";
    out << prf_csv_row("note_onset", finish(tot.onset)) << "\n";
    out << prf_csv_row("note_onset_offset", finish(tot.onset_offset)) << "\n";
}

void cmd_synth(const SynthArgs& a, std::ostream& out) {
    const PipelineConfig cfg = load_config(a.config);
    const fs::path dir(a.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw FormatError("cannot create output directory " + a.out);

    std::string manifest = "clip_id,wav_path,midi_path,seed\n";
    std::size_t clipped = 0;
    char name[32];
    for (std::size_t i = 0; i < a.clips; ++i) {
        const SynthClip clip = make_clip(cfg.score, cfg.synth, cfg.frontend.sample_rate, a.seed, i);
        std::snprintf(name, sizeof name, "clip_%05zu", i);
        const std::string wav = std::string(name) + ".wav", mid = std::string(name) + ".mid";
        MidiDocument doc;
        doc.notes = clip.notes;
        try {
            write_file_atomic(dir / wav, encode_wav(clip.rendered.audio));
            write_file_atomic(dir / mid, write_smf(doc));
        } catch (const FormatError& e) {
            throw FormatError("cannot write to " + a.out + ": " + e.what());
        }
        clipped += clip.rendered.clipped_samples;
        manifest += std::string(name) + "," + wav + "," + mid + "," + std::to_string(clip.seed) + "\n";
    }
    try {
        write_file_atomic(dir / "manifest.csv", manifest);
    } catch (const FormatError& e) {
        throw FormatError("cannot write to " + a.out + ": " + e.what());
    }
    out << "clips: " << a.clips << "\n";
    out << "limiter clipped samples: " << clipped << "\n";
}

}  // namespace crnn::cli
