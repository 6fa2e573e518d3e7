#include "crnn/audio.hpp"

#include <bit>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>
#include <string>

#include "crnn/error.hpp"
#include "crnn/io_util.hpp"

namespace crnn {

void AudioBuffer::validate() const {
    if (sample_rate <= 0) throw std::invalid_argument("audio sample rate must be positive");
    for (double s : samples)
        if (!std::isfinite(s)) throw std::invalid_argument("audio contains non-finite samples");
}

namespace {

std::uint32_t get_u32(const char* p) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(p[0])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(p[1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(p[2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(p[3])) << 24;
}
std::uint16_t get_u16(const char* p) {
    return static_cast<std::uint16_t>(static_cast<unsigned char>(p[0]) |
                                      static_cast<unsigned char>(p[1]) << 8);
}

}  // namespace

WavReader::WavReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    const std::string name = path.string();
    if (!in_) throw FormatError("cannot open audio file: " + name);
    char riff[12];
    if (!in_.read(riff, 12) || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(riff + 8, "WAVE", 4) != 0)
        throw FormatError(name + ": not a RIFF/WAVE file");

    bool have_fmt = false;
    std::uint16_t format = 0;
    for (;;) {
        char hdr[8];
        if (!in_.read(hdr, 8)) throw FormatError(name + ": missing data chunk");
        const std::uint32_t len = get_u32(hdr + 4);
        if (std::memcmp(hdr, "fmt ", 4) == 0) {
            if (len < 16) throw FormatError(name + ": fmt chunk too short");
            std::vector<char> fmt(len);
            if (!in_.read(fmt.data(), len)) throw FormatError(name + ": truncated fmt chunk");
            format = get_u16(fmt.data());
            channels_ = get_u16(fmt.data() + 2);
            sample_rate_ = static_cast<int>(get_u32(fmt.data() + 4));
            bits_ = get_u16(fmt.data() + 14);
            if (format == 0xFFFE) {
                if (len < 26) throw FormatError(name + ": extensible fmt chunk too short");
                format = get_u16(fmt.data() + 24);
            }
            if (len & 1) in_.ignore(1);
            have_fmt = true;
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            if (!have_fmt) throw FormatError(name + ": data chunk before fmt chunk");
            if (format == 1 && bits_ == 16) {
                is_float_ = false;
            } else if (format == 3 && bits_ == 32) {
                is_float_ = true;
            } else {
                throw FormatError(name + ": unsupported encoding (format " + std::to_string(format) +
                                  ", " + std::to_string(bits_) + " bits); need PCM16 or float32");
            }
            if (channels_ < 1) throw FormatError(name + ": zero channels");
            if (sample_rate_ <= 0) throw FormatError(name + ": invalid sample rate");
            total_frames_ = len / (static_cast<std::uint32_t>(channels_) * (bits_ / 8));
            return;
        } else {
            in_.ignore(len + (len & 1));
        }
    }
}

std::vector<double> WavReader::read(std::size_t max_frames) {
    const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(max_frames, remaining_frames()));
    std::vector<double> out(n);
    if (n == 0) return out;
    const std::size_t width = static_cast<std::size_t>(bits_ / 8);
    std::vector<char> raw(n * channels_ * width);
    if (!in_.read(raw.data(), static_cast<std::streamsize>(raw.size())))
        throw FormatError("truncated audio data");
    const double inv_ch = 1.0 / channels_;
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels_; ++c) {
            const char* p = raw.data() + (i * channels_ + c) * width;
            if (is_float_) {
                acc += static_cast<double>(std::bit_cast<float>(get_u32(p)));
            } else {
                acc += static_cast<double>(static_cast<std::int16_t>(get_u16(p))) / 32768.0;
            }
        }
        out[i] = acc * inv_ch;
    }
    read_frames_ += n;
    return out;
}

AudioBuffer read_wav(const std::filesystem::path& path) {
    WavReader reader(path);
    AudioBuffer buf;
    buf.sample_rate = reader.sample_rate();
    buf.samples = reader.read(static_cast<std::size_t>(reader.total_frames()));
    return buf;
}

std::vector<std::uint8_t> encode_wav(const AudioBuffer& audio, WavEncoding enc) {
    const std::uint16_t bits = enc == WavEncoding::Pcm16 ? 16 : 32;
    const std::uint32_t data_len = static_cast<std::uint32_t>(audio.samples.size() * (bits / 8));
    ByteWriter w;
    w.bytes("RIFF");
    w.u32le(36 + data_len);
    w.bytes("WAVE");
    w.bytes("fmt ");
    w.u32le(16);
    w.u16le(enc == WavEncoding::Pcm16 ? 1 : 3);
    w.u16le(1);
    w.u32le(static_cast<std::uint32_t>(audio.sample_rate));
    w.u32le(static_cast<std::uint32_t>(audio.sample_rate) * (bits / 8));
    w.u16le(bits / 8);
    w.u16le(bits);
    w.bytes("data");
    w.u32le(data_len);
    for (double s : audio.samples) {
        if (enc == WavEncoding::Pcm16) {
            // Same 1/32768 scale as the reader; +1.0 saturates at 32767.
            const double c = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
            w.u16le(static_cast<std::uint16_t>(static_cast<std::int16_t>(c)));
        } else {
            w.u32le(std::bit_cast<std::uint32_t>(static_cast<float>(s)));
        }
    }
    return std::move(w).take();
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio, WavEncoding enc) {
    write_file_atomic(path, encode_wav(audio, enc));
}

Decimator::Decimator(int factor) : factor_(factor) {
    if (factor < 1) throw std::invalid_argument("decimation factor must be >= 1");
    if (factor == 1) return;
    // Windowed sinc, cutoff slightly below the new Nyquist.
    const int half = 16 * factor;
    const double cutoff = 0.45 / factor;
    taps_.resize(2 * half + 1);
    double sum = 0.0;
    for (int n = -half; n <= half; ++n) {
        const double x = 2.0 * cutoff * n;
        const double sinc = n == 0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
        const double win = 0.5 + 0.5 * std::cos(std::numbers::pi * n / (half + 1));
        taps_[n + half] = 2.0 * cutoff * sinc * win;
        sum += taps_[n + half];
    }
    for (double& t : taps_) t /= sum;
    history_.assign(taps_.size() - 1, 0.0);
}

std::vector<double> Decimator::push(std::span<const double> in) {
    if (factor_ == 1) return {in.begin(), in.end()};
    std::vector<double> out;
    const std::size_t ntaps = taps_.size();
    for (double x : in) {
        history_.push_back(x);
        if (phase_ % factor_ == 0) {
            double acc = 0.0;
            const double* h = history_.data() + history_.size() - ntaps;
            for (std::size_t j = 0; j < ntaps; ++j) acc += taps_[j] * h[j];
            out.push_back(acc);
        }
        ++phase_;
        if (history_.size() > 4 * ntaps)
            history_.erase(history_.begin(), history_.end() - static_cast<std::ptrdiff_t>(ntaps - 1));
    }
    return out;
}

}  // namespace crnn
