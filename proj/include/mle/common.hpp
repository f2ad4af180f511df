#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mle {

    // Error taxonomy. Every failure the library reports derives from mle::Error
    // so callers (the CLI in particular) can map families onto exit codes.
    struct Error : std::runtime_error {
        using std::runtime_error::runtime_error;
    };

    struct DimensionError : Error {
        using Error::Error;
    };

    struct EvaluationError : Error {
        using Error::Error;
    };

    struct EmptyArchiveError : Error {
        using Error::Error;
    };

    struct ConfigError : Error {
        using Error::Error;
    };

    struct UnresolvedPointerError : Error {
        using Error::Error;
    };

    struct DivergedError : Error {
        using Error::Error;
    };

    struct LoadError : Error {
        using Error::Error;
    };

    struct UnsupportedExportError : Error {
        using Error::Error;
    };

    enum class Level { Material, Component, Robot };

    /// Which evaluator produced a fitness. `Real` is the fine evaluator.
    enum class Fidelity { Virtual, Real };

    inline std::string_view to_string(Level level)
    {
        switch (level) {
        case Level::Material:
            return "material";
        case Level::Component:
            return "component";
        case Level::Robot:
            return "robot";
        }
        return "?";
    }

    inline Level level_from_string(std::string_view s)
    {
        if (s == "material")
            return Level::Material;
        if (s == "component")
            return Level::Component;
        if (s == "robot")
            return Level::Robot;
        throw ConfigError("unknown level '" + std::string(s) + "'");
    }

    inline std::string_view to_string(Fidelity f) { return f == Fidelity::Real ? "real" : "virtual"; }

    inline Fidelity fidelity_from_string(std::string_view s)
    {
        if (s == "real")
            return Fidelity::Real;
        if (s == "virtual")
            return Fidelity::Virtual;
        throw ConfigError("unknown fidelity '" + std::string(s) + "'");
    }

    template <typename T>
    constexpr T clamp(T v, T lo, T hi) { return std::min(std::max(v, lo), hi); }

    /// 64-bit FNV-1a. Used as the stable genome digest.
    inline std::uint64_t fnv1a64(std::string_view bytes)
    {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : bytes) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    inline std::string hex64(std::uint64_t v)
    {
        static constexpr char digits[] = "0123456789abcdef";
        std::string out(16, '0');
        for (int i = 15; i >= 0; --i) {
            out[static_cast<std::size_t>(i)] = digits[v & 0xF];
            v >>= 4;
        }
        return out;
    }

} // namespace mle
