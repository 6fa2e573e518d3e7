#pragma once

#include <stdexcept>
#include <string>

namespace crnn {

/// Malformed or unsupported input data (audio, MIDI, roll files, manifests).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Configuration or model files that disagree with what the caller expects.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace crnn
