#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace crnn {

/// Little/big-endian byte sink for the binary formats in this library.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16le(std::uint16_t v);
    void u32le(std::uint32_t v);
    void u16be(std::uint16_t v);
    void u32be(std::uint32_t v);
    void f32le(float v);
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void bytes(std::span<const std::uint8_t> s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    std::size_t size() const { return buf_.size(); }
    const std::vector<std::uint8_t>& view() const { return buf_; }
    std::vector<std::uint8_t> take() && { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; every overrun throws FormatError with `what` as context.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> data, std::string what)
        : data_(data), what_(std::move(what)) {}

    std::uint8_t u8();
    std::uint16_t u16le();
    std::uint32_t u32le();
    std::uint16_t u16be();
    std::uint32_t u32be();
    float f32le();
    std::span<const std::uint8_t> bytes(std::size_t n);
    std::string string(std::size_t n);

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool done() const { return pos_ == data_.size(); }
    void skip(std::size_t n) { bytes(n); }

private:
    void need(std::size_t n);
    std::span<const std::uint8_t> data_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32(std::span<const std::uint8_t> data);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace crnn
