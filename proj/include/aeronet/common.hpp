#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>

namespace aeronet {

// Error hierarchy. The CLI maps these onto exit codes: config errors -> 2,
// connectivity errors -> 3, everything else thrown at runtime -> 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct ConnectivityError : Error {
    using Error::Error;
};

struct ProtocolError : Error {
    using Error::Error;
};

struct InvariantError : Error {
    using Error::Error;
};

// Cartesian position in meters. z is altitude.
struct Position {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    bool operator==(const Position&) const = default;
};

inline double distance(const Position& a, const Position& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// SplitMix64: the portable 64-bit PRNG used for parameter initialization.
// Fully specified here so every platform draws identical streams.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1), 53 mantissa bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  private:
    std::uint64_t state_;
};

// FNV-1a 64-bit, used as the determinism digest over trace lines.
class Fnv1a64 {
  public:
    void update(std::string_view bytes) {
        for (unsigned char c : bytes) {
            hash_ ^= c;
            hash_ *= 0x100000001b3ULL;
        }
    }

    std::uint64_t value() const { return hash_; }

    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash_));
        return std::string(buf);
    }

  private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("AERONET_LOG_LEVEL");
        if (env == nullptr) return LogLevel::Info;
        std::string_view v(env);
        if (v == "debug") return LogLevel::Debug;
        if (v == "error") return LogLevel::Error;
        return LogLevel::Info;
    }();
    return level;
}

template <typename... Args>
void log_at(LogLevel level, const char* fmt, Args... args) {
    if (static_cast<int>(level) > static_cast<int>(log_level())) return;
    const char* tag = level == LogLevel::Error ? "error" : (level == LogLevel::Info ? "info" : "debug");
    std::fprintf(stderr, "[aeronet:%s] ", tag);
    if constexpr (sizeof...(Args) == 0) {
        std::fputs(fmt, stderr);
    } else {
        std::fprintf(stderr, fmt, args...);
    }
    std::fputc('\n', stderr);
}

#define AERONET_LOG_INFO(...) ::aeronet::log_at(::aeronet::LogLevel::Info, __VA_ARGS__)
#define AERONET_LOG_DEBUG(...) ::aeronet::log_at(::aeronet::LogLevel::Debug, __VA_ARGS__)
#define AERONET_LOG_ERROR(...) ::aeronet::log_at(::aeronet::LogLevel::Error, __VA_ARGS__)

}  // namespace aeronet
