#include "crnn/midi.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>

#include "crnn/error.hpp"
#include "crnn/io_util.hpp"

namespace crnn {

namespace {
constexpr std::uint32_t kMaxVlq = 0x0FFFFFFF;
}

void MidiDocument::validate() const {
    if (ppq <= 0 || ppq > 0x7FFF) throw std::invalid_argument("ppq must be in [1, 32767]");
    if (tempo == 0 || tempo > 0xFFFFFF) throw std::invalid_argument("tempo must be in [1, 2^24)");
    for (const auto& n : notes) {
        if (n.pitch < 0 || n.pitch > 127) throw std::invalid_argument("note pitch outside 0..127");
        if (n.velocity < 1 || n.velocity > 127) throw std::invalid_argument("note velocity outside 1..127");
        if (!(n.onset >= 0) || !(n.offset > n.onset)) throw std::invalid_argument("note times must satisfy 0 <= onset < offset");
    }
}

std::int64_t MidiDocument::to_tick(double seconds) const {
    return static_cast<std::int64_t>(std::llround(seconds * 1e6 / tempo * ppq));
}

void append_vlq(std::vector<std::uint8_t>& out, std::uint32_t value) {
    if (value > kMaxVlq) throw std::overflow_error("delta time exceeds the 28-bit variable-length limit");
    std::uint8_t buf[4];
    int n = 0;
    buf[n++] = value & 0x7F;
    while (value >>= 7) buf[n++] = static_cast<std::uint8_t>(0x80 | (value & 0x7F));
    while (n--) out.push_back(buf[n]);
}

std::vector<std::uint8_t> write_smf(const MidiDocument& doc) {
    doc.validate();
    struct Ev {
        std::int64_t tick;
        int on;  // 0 = off, 1 = on
        int pitch;
        int velocity;
    };
    std::vector<Ev> evs;
    evs.reserve(doc.notes.size() * 2);
    for (const auto& n : doc.notes) {
        evs.push_back({doc.to_tick(n.onset), 1, n.pitch, n.velocity});
        evs.push_back({doc.to_tick(n.offset), 0, n.pitch, 0});
    }
    std::stable_sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) {
        return std::tie(a.tick, a.on, a.pitch) < std::tie(b.tick, b.on, b.pitch);
    });

    std::vector<std::uint8_t> track;
    track.insert(track.end(), {0x00, 0xFF, 0x51, 0x03, static_cast<std::uint8_t>(doc.tempo >> 16),
                               static_cast<std::uint8_t>(doc.tempo >> 8), static_cast<std::uint8_t>(doc.tempo)});
    std::int64_t last = 0;
    for (const auto& e : evs) {
        const std::int64_t delta = e.tick - last;
        if (e.tick > kMaxVlq || delta > kMaxVlq)
            throw std::overflow_error("note time exceeds the 28-bit tick range");
        append_vlq(track, static_cast<std::uint32_t>(delta));
        track.push_back(e.on ? 0x90 : 0x80);
        track.push_back(static_cast<std::uint8_t>(e.pitch));
        track.push_back(static_cast<std::uint8_t>(e.velocity));
        last = e.tick;
    }
    track.insert(track.end(), {0x00, 0xFF, 0x2F, 0x00});

    ByteWriter w;
    w.bytes("MThd");
    w.u32be(6);
    w.u16be(0);
    w.u16be(1);
    w.u16be(static_cast<std::uint16_t>(doc.ppq));
    w.bytes("MTrk");
    w.u32be(static_cast<std::uint32_t>(track.size()));
    w.bytes(track);
    return std::move(w).take();
}

namespace {

std::uint32_t read_vlq(ByteReader& r) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        const std::uint8_t b = r.u8();
        v = (v << 7) | (b & 0x7F);
        if (!(b & 0x80)) return v;
    }
    throw FormatError("variable-length quantity longer than 4 bytes");
}

struct RawNoteEv {
    std::int64_t tick;
    int track;
    std::size_t seq;
    bool on;
    int channel, pitch, velocity;
};

}  // namespace

MidiDocument read_smf(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "MIDI file");
    if (r.string(4) != "MThd") throw FormatError("not a MIDI file (missing MThd)");
    const std::uint32_t hlen = r.u32be();
    if (hlen < 6) throw FormatError("MIDI header chunk too short");
    const int format = r.u16be();
    const int ntrks = r.u16be();
    const std::uint16_t division = r.u16be();
    r.skip(hlen - 6);
    if (format != 0 && format != 1) throw FormatError("unsupported MIDI format " + std::to_string(format));
    if (division & 0x8000) throw FormatError("SMPTE time division is not supported");
    if (division == 0) throw FormatError("MIDI division must be positive");

    MidiDocument doc;
    doc.ppq = division;
    std::vector<RawNoteEv> events;
    std::vector<std::pair<std::int64_t, std::uint32_t>> tempos;
    std::size_t seq = 0;

    for (int tr = 0; tr < ntrks; ++tr) {
        if (r.remaining() < 8) throw FormatError("missing track chunk " + std::to_string(tr));
        const std::string id = r.string(4);
        const std::uint32_t len = r.u32be();
        auto body = r.bytes(len);
        if (id != "MTrk") continue;  // unknown chunks are skipped
        ByteReader t(body, "track " + std::to_string(tr));
        std::int64_t tick = 0;
        int status = 0;
        bool ended = false;
        while (!t.done() && !ended) {
            tick += read_vlq(t);
            std::uint8_t b = t.u8();
            if (b < 0x80) {
                if (status == 0)
                    throw FormatError("running status without a prior status byte at tick " + std::to_string(tick));
            } else {
                status = b;
                if (b < 0xF0) b = t.u8();
            }
            if (status == 0xFF) {
                const std::uint8_t type = t.u8();
                const std::uint32_t mlen = read_vlq(t);
                auto data = t.bytes(mlen);
                if (type == 0x51) {
                    if (mlen != 3) throw FormatError("tempo meta event with length " + std::to_string(mlen));
                    tempos.emplace_back(tick, static_cast<std::uint32_t>(data[0]) << 16 | data[1] << 8 | data[2]);
                } else if (type == 0x2F) {
                    ended = true;
                }
                status = 0;  // meta events cancel running status
                continue;
            }
            if (status == 0xF0 || status == 0xF7) {
                t.skip(read_vlq(t));
                status = 0;
                continue;
            }
            if (status >= 0xF0) throw FormatError("unexpected system message in track at tick " + std::to_string(tick));
            const int kind = status & 0xF0;
            const int channel = status & 0x0F;
            const int d1 = b;
            if (d1 & 0x80) throw FormatError("data byte with high bit set at tick " + std::to_string(tick));
            int d2 = 0;
            if (kind != 0xC0 && kind != 0xD0) {
                d2 = t.u8();
                if (d2 & 0x80) throw FormatError("data byte with high bit set at tick " + std::to_string(tick));
            }
            if (kind == 0x90 || kind == 0x80) {
                const bool on = kind == 0x90 && d2 > 0;
                events.push_back({tick, tr, seq++, on, channel, d1, d2});
            }
        }
    }

    std::stable_sort(tempos.begin(), tempos.end());
    if (!tempos.empty()) {
        doc.tempo = tempos.front().second;
        for (const auto& [tick, tempo] : tempos)
            if (tempo != doc.tempo)
                throw FormatError("tempo change at tick " + std::to_string(tick) + " is not supported");
    }

    // Merge tracks by absolute tick; within a tick keep file order.
    std::stable_sort(events.begin(), events.end(),
                     [](const RawNoteEv& a, const RawNoteEv& b) { return a.tick < b.tick; });
    std::map<std::pair<int, int>, std::deque<std::pair<std::int64_t, int>>> open;
    const double spt = doc.seconds_per_tick();
    for (const auto& e : events) {
        auto& q = open[{e.channel, e.pitch}];
        if (e.on) {
            q.emplace_back(e.tick, e.velocity);
        } else if (!q.empty()) {
            const auto [on_tick, vel] = q.front();
            q.pop_front();
            if (e.tick > on_tick)
                doc.notes.push_back({e.pitch, on_tick * spt, e.tick * spt, vel});
        }
    }
    for (const auto& [key, q] : open)
        if (!q.empty())
            throw FormatError("unpaired note-on: pitch " + std::to_string(key.second) + " at tick " +
                              std::to_string(q.front().first));
    std::stable_sort(doc.notes.begin(), doc.notes.end(), [](const TimedNote& a, const TimedNote& b) {
        return std::tie(a.onset, a.pitch) < std::tie(b.onset, b.pitch);
    });
    return doc;
}

std::vector<TimedNote> frames_to_seconds(std::span<const NoteEvent> notes, double frame_rate) {
    std::vector<TimedNote> out;
    out.reserve(notes.size());
    for (const auto& n : notes)
        out.push_back({n.pitch, n.onset_frame / frame_rate, n.offset_frame / frame_rate, n.velocity});
    return out;
}

std::vector<NoteEvent> seconds_to_frames(std::span<const TimedNote> notes, double frame_rate,
                                         double slack_seconds) {
    std::vector<NoteEvent> out;
    out.reserve(notes.size());
    for (const auto& n : notes) {
        // The epsilon absorbs round-off from frame -> seconds -> frame.
        const int on = static_cast<int>(std::floor((n.onset + slack_seconds) * frame_rate + 1e-6));
        int off = static_cast<int>(std::floor((n.offset + slack_seconds) * frame_rate + 1e-6));
        if (off <= on) off = on + 1;
        out.push_back({n.pitch, on, off, n.velocity});
    }
    return out;
}

}  // namespace crnn
