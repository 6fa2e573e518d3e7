#include "crnn/io_util.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <iterator>

#include "crnn/error.hpp"

namespace crnn {

void ByteWriter::u16le(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
}
void ByteWriter::u32le(std::uint32_t v) {
    u16le(static_cast<std::uint16_t>(v));
    u16le(static_cast<std::uint16_t>(v >> 16));
}
void ByteWriter::u16be(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v >> 8));
    u8(static_cast<std::uint8_t>(v));
}
void ByteWriter::u32be(std::uint32_t v) {
    u16be(static_cast<std::uint16_t>(v >> 16));
    u16be(static_cast<std::uint16_t>(v));
}
void ByteWriter::f32le(float v) { u32le(std::bit_cast<std::uint32_t>(v)); }

void ByteReader::need(std::size_t n) {
    if (remaining() < n)
        throw FormatError(what_ + ": unexpected end of data at byte " + std::to_string(pos_));
}
std::uint8_t ByteReader::u8() {
    need(1);
    return data_[pos_++];
}
std::uint16_t ByteReader::u16le() {
    const std::uint16_t lo = u8();
    return static_cast<std::uint16_t>(lo | u8() << 8);
}
std::uint32_t ByteReader::u32le() {
    const std::uint32_t lo = u16le();
    return lo | static_cast<std::uint32_t>(u16le()) << 16;
}
std::uint16_t ByteReader::u16be() {
    const std::uint16_t hi = u8();
    return static_cast<std::uint16_t>(hi << 8 | u8());
}
std::uint32_t ByteReader::u32be() {
    const std::uint32_t hi = u16be();
    return hi << 16 | u16be();
}
float ByteReader::f32le() { return std::bit_cast<float>(u32le()); }
std::span<const std::uint8_t> ByteReader::bytes(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
}
std::string ByteReader::string(std::size_t n) {
    auto s = bytes(n);
    return {s.begin(), s.end()};
}

std::uint32_t crc32(std::span<const std::uint8_t> data) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in bounded pieces.
    std::size_t off = 0;
    while (off < data.size()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(data.size() - off, 1u << 30));
        crc = ::crc32(crc, data.data() + off, n);
        off += n;
    }
    return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open file: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write file: " + path.string());
        out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
        if (!out) throw FormatError("write failed: " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw FormatError("cannot rename into place: " + path.string() + " (" + ec.message() + ")");
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace crnn
