#include "crnn/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>

#include "crnn/error.hpp"
#include "crnn/io_util.hpp"

namespace crnn {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view v) {
    T out{};
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end) throw ConfigError("invalid number '" + std::string(v) + "'");
    return out;
}

template <>
double parse_number<double>(std::string_view v) {
    // from_chars for double is unavailable on some toolchains; strtod on a copy.
    const std::string s(v);
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw ConfigError("invalid number '" + s + "'");
    return d;
}

bool parse_bool(std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("invalid boolean '" + std::string(v) + "'");
}

std::vector<std::string_view> split(std::string_view v, char sep) {
    std::vector<std::string_view> out;
    if (trim(v).empty()) return out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = v.find(sep, start);
        out.push_back(trim(v.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::vector<ConvSpec> parse_specs(std::string_view v) {
    std::vector<ConvSpec> out;
    for (auto item : split(v, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string_view::npos) throw ConfigError("layer spec '" + std::string(item) + "' must be channels:kernel");
        out.push_back({parse_number<std::size_t>(trim(item.substr(0, colon))),
                       parse_number<std::size_t>(trim(item.substr(colon + 1)))});
    }
    return out;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
template <class T>
std::string fmt_int(T v) {
    return std::to_string(v);
}
std::string fmt_specs(const std::vector<ConvSpec>& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i].channels) + ":" + std::to_string(s[i].kernel);
    }
    return out;
}

struct Field {
    std::function<void(PipelineConfig&, std::string_view)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

#define CRNN_NUM(key, member, type)                                                                \
    {key,                                                                                          \
     {[](PipelineConfig& c, std::string_view v) { c.member = parse_number<type>(v); },             \
      [](const PipelineConfig& c) { return std::is_floating_point_v<type> ? fmt(double(c.member)) \
                                                                          : fmt_int(c.member); }}}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        CRNN_NUM("frontend.sample_rate", frontend.sample_rate, int),
        CRNN_NUM("frontend.fmin", frontend.fmin, double),
        CRNN_NUM("frontend.bins_per_octave", frontend.bins_per_octave, int),
        CRNN_NUM("frontend.n_pitch_bins", frontend.n_pitch_bins, int),
        CRNN_NUM("frontend.hop", frontend.hop, int),
        {"frontend.harmonics",
         {[](PipelineConfig& c, std::string_view v) {
              c.frontend.harmonics.clear();
              for (auto h : split(v, ',')) c.frontend.harmonics.push_back(parse_number<int>(h));
          },
          [](const PipelineConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.frontend.harmonics.size(); ++i)
                  s += (i ? "," : "") + std::to_string(c.frontend.harmonics[i]);
              return s;
          }}},
        CRNN_NUM("frontend.max_kernel_seconds", frontend.max_kernel_seconds, double),
        CRNN_NUM("frontend.power_floor", frontend.power_floor, double),

        CRNN_NUM("network.n_pitch_bins_in", network.n_pitch_bins_in, std::size_t),
        CRNN_NUM("network.n_harmonics", network.n_harmonics, std::size_t),
        {"network.conv_stack",
         {[](PipelineConfig& c, std::string_view v) { c.network.conv_stack = parse_specs(v); },
          [](const PipelineConfig& c) { return fmt_specs(c.network.conv_stack); }}},
        CRNN_NUM("network.pool_width", network.pool_width, int),
        {"network.convlstm_stack",
         {[](PipelineConfig& c, std::string_view v) { c.network.convlstm_stack = parse_specs(v); },
          [](const PipelineConfig& c) { return fmt_specs(c.network.convlstm_stack); }}},
        CRNN_NUM("network.upsample_factor", network.upsample_factor, int),
        {"network.time_conv",
         {[](PipelineConfig& c, std::string_view v) {
              auto s = parse_specs(v);
              if (s.size() != 1) throw ConfigError("network.time_conv takes exactly one channels:k_t entry");
              c.network.time_conv = s.front();
          },
          [](const PipelineConfig& c) { return fmt_specs({c.network.time_conv}); }}},
        {"network.layer_norm",
         {[](PipelineConfig& c, std::string_view v) { c.network.layer_norm = parse_bool(v); },
          [](const PipelineConfig& c) { return std::string(c.network.layer_norm ? "true" : "false"); }}},
        CRNN_NUM("network.ln_eps", network.ln_eps, double),
        CRNN_NUM("network.tanh_amplitude", network.tanh.amplitude, double),
        CRNN_NUM("network.tanh_slope", network.tanh.slope, double),
        CRNN_NUM("network.input_offset", network.input_offset, double),
        CRNN_NUM("network.input_scale", network.input_scale, double),

        CRNN_NUM("decoder.theta_art", decoder.theta_art, double),
        CRNN_NUM("decoder.theta_sus", decoder.theta_sus, double),

        CRNN_NUM("trainer.lr", trainer.lr, double),
        CRNN_NUM("trainer.beta1", trainer.beta1, double),
        CRNN_NUM("trainer.beta2", trainer.beta2, double),
        CRNN_NUM("trainer.eps", trainer.eps, double),
        CRNN_NUM("trainer.segment_length", trainer.segment_length, std::size_t),
        CRNN_NUM("trainer.lanes", trainer.lanes, std::size_t),
        CRNN_NUM("trainer.clip_norm", trainer.clip_norm, double),
        CRNN_NUM("trainer.pos_weight_art", trainer.pos_weight_art, double),
        CRNN_NUM("trainer.pred_clamp", trainer.pred_clamp, double),
        CRNN_NUM("trainer.steps", trainer.steps, std::size_t),
        CRNN_NUM("trainer.epochs", trainer.epochs, std::size_t),
        CRNN_NUM("trainer.checkpoint_every", trainer.checkpoint_every, std::size_t),
        CRNN_NUM("trainer.threads", trainer.threads, int),

        CRNN_NUM("score.pitch_min", score.pitch_min, int),
        CRNN_NUM("score.pitch_max", score.pitch_max, int),
        CRNN_NUM("score.max_polyphony", score.max_polyphony, int),
        CRNN_NUM("score.duration_min", score.duration_min, double),
        CRNN_NUM("score.duration_max", score.duration_max, double),
        CRNN_NUM("score.clip_seconds", score.clip_seconds, double),
        CRNN_NUM("score.notes_min", score.notes_min, int),
        CRNN_NUM("score.notes_max", score.notes_max, int),

        CRNN_NUM("synth.n_partials", synth.n_partials, int),
        CRNN_NUM("synth.attack_seconds", synth.attack_seconds, double),
        CRNN_NUM("synth.release_seconds", synth.release_seconds, double),
        CRNN_NUM("synth.peak_amplitude", synth.peak_amplitude, double),
        CRNN_NUM("synth.limiter_threshold", synth.limiter_threshold, double),
    };
    return table;
}

#undef CRNN_NUM

const Field* find_field(std::string_view key) {
    for (const auto& [k, f] : fields())
        if (k == key) return &f;
    return nullptr;
}

}  // namespace

void PipelineConfig::set(std::string_view key, std::string_view value) {
    const Field* f = find_field(key);
    if (!f) throw ConfigError("unknown config key '" + std::string(key) + "'");
    f->set(*this, trim(value));
}

void PipelineConfig::apply_text(std::string_view text, std::string_view source) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        std::string_view line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (!line.empty()) {
            const auto eq = line.find('=');
            const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
            if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
            try {
                set(trim(line.substr(0, eq)), line.substr(eq + 1));
            } catch (const ConfigError& e) {
                throw ConfigError(where + e.what());
            }
        }
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
}

PipelineConfig PipelineConfig::parse(std::string_view text, std::string_view source) {
    PipelineConfig c;
    c.apply_text(text, source);
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file(path);
    } catch (const FormatError&) {
        throw ConfigError("cannot read config file " + path.string());
    }
    return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path.string());
}

void PipelineConfig::validate() const {
    frontend.validate();
    network.validate();
    trainer.validate();
    score.validate();
    synth.validate();
    if (network.n_pitch_bins_in != static_cast<std::size_t>(frontend.n_pitch_bins))
        throw ConfigError("network.n_pitch_bins_in (" + std::to_string(network.n_pitch_bins_in) +
                          ") must equal frontend.n_pitch_bins (" + std::to_string(frontend.n_pitch_bins) + ")");
    if (network.n_harmonics != frontend.harmonics.size())
        throw ConfigError("network.n_harmonics must equal the number of frontend harmonics");
    if (network.n_pitches_out() != static_cast<std::size_t>(kPitchCount))
        throw ConfigError("pooling must produce " + std::to_string(kPitchCount) + " pitch rows, got " +
                          std::to_string(network.n_pitches_out()));
    if (frontend.bins_per_octave / 12 != network.pool_width)
        throw ConfigError("network.pool_width must equal bins per semitone so pooled rows are MIDI pitches");
    if (!(decoder.theta_art > 0 && decoder.theta_art < 1) || !(decoder.theta_sus > 0 && decoder.theta_sus < 1))
        throw ConfigError("decoder thresholds must lie in (0, 1)");
}

std::string PipelineConfig::model_text() const {
    std::string s;
    for (const auto& [k, f] : fields())
        if (k.starts_with("frontend.") || k.starts_with("network.") || k.starts_with("decoder."))
            s += k + " = " + f.get(*this) + "\n";
    return s;
}

std::string PipelineConfig::to_text() const {
    std::string s;
    for (const auto& [k, f] : fields()) s += k + " = " + f.get(*this) + "\n";
    return s;
}

std::vector<std::string> PipelineConfig::keys() {
    std::vector<std::string> out;
    for (const auto& [k, f] : fields()) out.push_back(k);
    return out;
}

}  // namespace crnn
