#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gesturemap {

enum class ErrorKind {
    parse,
    schema,
    parameter,
    insufficient_data,
    data,
    unsupported_format,
    empty_input,
    divergence,
    protocol,
    range,
    registry,
    version,
    io,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the engine; callers branch on kind().
class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message)
{
    throw Error(kind, message);
}

} // namespace gesturemap
