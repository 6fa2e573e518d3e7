#include "crnn_cli/cli.hpp"

#include <CLI11.hpp>
#include <sstream>

#include "commands.hpp"
#include "crnn/error.hpp"

namespace crnn::cli {

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Streaming polyphonic transcription: audio to MIDI with a convolutional-recurrent network", "crnn-pitch"};
    app.require_subcommand(1);

    TranscribeArgs ta;
    auto* tr = app.add_subcommand("transcribe", "Transcribe a WAV file to MIDI (streams; latency is half the longest CQT kernel, 1 s by default)");
    tr->add_option("--model", ta.model, "Model file written by `train`")->required();
    tr->add_option("--in", ta.in, "Input WAV (PCM16 or float32; mono or mixed down)")->required();
    tr->add_option("--out", ta.out, "Output MIDI file")->required();
    tr->add_option("--theta-art", ta.theta_art, "Articulation threshold (default from the model)");
    tr->add_option("--theta-sus", ta.theta_sus, "Sustain threshold (default from the model)");
    tr->add_option("--chunk", ta.chunk, "Network chunk size in input frames")->capture_default_str()->check(CLI::PositiveNumber);

    TrainArgs tg;
    auto* tn = app.add_subcommand("train", "Train a model on a manifest of (wav, midi) pairs");
    tn->add_option("--config", tg.config, "Pipeline config (key = value lines)");
    tn->add_option("--data", tg.data, "Manifest CSV: clip_id,wav_path,midi_path[,seed]")->required();
    tn->add_option("--out", tg.out, "Output model file")->required();
    tn->add_option("--seed", tg.seed, "Seed for initialisation and clip order")->capture_default_str();
    tn->add_option("--loss-csv", tg.loss_csv, "Loss curve CSV (default <out>.loss.csv)");

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "Score predicted MIDI against reference MIDI");
    ev->add_option("--pred", ea.pred, "Predicted MIDI file or directory")->required();
    ev->add_option("--ref", ea.ref, "Reference MIDI file or directory")->required();
    ev->add_option("--frame-rate", ea.frame_rate, "Frame rate for framewise scores")->capture_default_str();

    SynthArgs sa;
    auto* sy = app.add_subcommand("synth", "Generate synthetic (wav, midi) clips and a manifest");
    sy->add_option("--config", sa.config, "Pipeline config (score.* and synth.* keys)");
    sy->add_option("--out", sa.out, "Output directory")->required();
    sy->add_option("--clips", sa.clips, "Number of clips")->required();
    sy->add_option("--seed", sa.seed, "Master seed")->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    }

    try {
        if (*tr) cmd_transcribe(ta, out);
        else if (*tn) cmd_train(tg, out);
        else if (*ev) cmd_eval(ea, out, err);
        else if (*sy) cmd_synth(sa, out);
        return kOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const FormatError& e) {
        err << "input error: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kInternal;
    }
}

}  // namespace crnn::cli
