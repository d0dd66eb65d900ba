#pragma once

#include <bit>
#include <cstdint>
#include <functional>
#include <iostream>
#include <istream>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>

namespace pcaharm {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IngestError : public Error {
public:
    using Error::Error;
};

class PcaError : public Error {
public:
    using Error::Error;
};

class MetricsError : public Error {
public:
    using Error::Error;
};

class StatsError : public Error {
public:
    using Error::Error;
};

/// Raised when a t-test has no defined statistic (zero variance).
class DegenerateTestError : public StatsError {
public:
    using StatsError::StatsError;
};

class ExperimentError : public Error {
public:
    using Error::Error;
};

namespace log {

enum class Level { debug, info, warn, error };

using Sink = std::function<void(Level, const std::string&)>;

namespace detail {

inline Sink& sink_slot() {
    static Sink sink;
    return sink;
}

inline Level& threshold_slot() {
    static Level level = Level::info;
    return level;
}

inline std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

inline const char* level_name(Level level) {
    switch (level) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warning";
    case Level::error: return "error";
    }
    return "?";
}

}  // namespace detail

/// Replaces the process-wide log sink; an empty sink restores stderr output.
inline Sink set_sink(Sink sink) {
    std::lock_guard lock(detail::sink_mutex());
    return std::exchange(detail::sink_slot(), std::move(sink));
}

inline void set_level(Level level) {
    std::lock_guard lock(detail::sink_mutex());
    detail::threshold_slot() = level;
}

inline void write(Level level, const std::string& message) {
    std::lock_guard lock(detail::sink_mutex());
    if (level < detail::threshold_slot()) return;
    if (detail::sink_slot()) {
        detail::sink_slot()(level, message);
    } else {
        std::cerr << "[" << detail::level_name(level) << "] " << message << '\n';
    }
}

inline void debug(const std::string& m) { write(Level::debug, m); }
inline void info(const std::string& m) { write(Level::info, m); }
inline void warn(const std::string& m) { write(Level::warn, m); }

}  // namespace log

namespace io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    auto bits = std::bit_cast<U>(value);
    char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
    }
    out.write(bytes, sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    static_assert(std::is_trivially_copyable_v<T>);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
        throw Error("unexpected end of binary stream");
    }
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bits |= static_cast<U>(bytes[i]) << (8 * i);
    }
    return std::bit_cast<T>(bits);
}

}  // namespace io

}  // namespace pcaharm
