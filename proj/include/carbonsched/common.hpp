#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace carbonsched {

/// Virtual time and durations, in integer microseconds.
using Micros = std::int64_t;
/// Energy in joules.
using Joules = double;
/// Power in watts.
using Watts = double;
/// Carbon mass in grams CO2e.
using Grams = double;

inline constexpr double kMicrosPerSecond = 1e6;
inline constexpr double kJoulesPerKwh = 3.6e6;

inline double to_seconds(Micros us) { return static_cast<double>(us) / kMicrosPerSecond; }

/// Bad user input: malformed files, invariant violations in supplied data.
/// The CLI maps this family to exit status 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A line-oriented parse failure.
class ParseError : public InputError {
public:
    ParseError(std::size_t line, const std::string &what)
        : InputError("line " + std::to_string(line) + ": " + what), line_(line)
    {
    }
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// One or more invariant violations, all reported together.
class ValidationError : public InputError {
public:
    explicit ValidationError(std::vector<std::string> issues);
    const std::vector<std::string> &issues() const { return issues_; }

private:
    std::vector<std::string> issues_;
};

/// A cycle in an RPC call graph. `cycle()` lists the ids along the loop.
class CycleError : public ValidationError {
public:
    explicit CycleError(std::vector<std::string> cycle);
    const std::vector<std::string> &cycle() const { return cycle_; }

private:
    std::vector<std::string> cycle_;
};

/// Broken engine invariant (time regression, gating busy device, ...).
class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Deterministic seed derivation for named random sub-streams, so that adding
/// a consumer never perturbs the draws of another.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view name);

/// Formats a double with 17 significant digits (round-trip exact).
std::string format_double(double v);

} // namespace carbonsched
