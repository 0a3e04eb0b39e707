#pragma once

#include <stdexcept>
#include <string>

namespace msdi {

/// Base class for every error raised by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input: bad config, bad CSV, dimension mismatch.
class input_error : public error {
public:
    using error::error;
};

/// A numerical precondition failed (log of zero, division by a zero state,
/// underflow of a threshold factor, nonpositive information numbers).
class numeric_error : public error {
public:
    using error::error;
};

/// Raised when a stream-level computation fails; carries the 0-based stream.
class stream_error : public numeric_error {
public:
    stream_error(std::size_t stream, const std::string& what)
        : numeric_error("stream " + std::to_string(stream + 1) + ": " + what), stream_(stream) {}

    [[nodiscard]] std::size_t stream() const noexcept { return stream_; }

private:
    std::size_t stream_;
};

} // namespace msdi
