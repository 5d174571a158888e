#include "carbonsched/common.hpp"

#include <fmt/format.h>

namespace carbonsched {

namespace {

std::string join_issues(const std::vector<std::string> &issues)
{
    std::string out;
    for (const auto &issue : issues) {
        if (!out.empty()) out += "; ";
        out += issue;
    }
    return out;
}

std::string describe_cycle(const std::vector<std::string> &cycle)
{
    std::string out = "call graph cycle: ";
    for (std::size_t i = 0; i < cycle.size(); ++i) {
        if (i) out += " -> ";
        out += cycle[i];
    }
    if (!cycle.empty()) out += " -> " + cycle.front();
    return out;
}

} // namespace

ValidationError::ValidationError(std::vector<std::string> issues)
    : InputError(join_issues(issues)), issues_(std::move(issues))
{
}

CycleError::CycleError(std::vector<std::string> cycle)
    : ValidationError({describe_cycle(cycle)}), cycle_(std::move(cycle))
{
}

std::uint64_t substream_seed(std::uint64_t seed, std::string_view name)
{
    // FNV-1a over the name, then a splitmix64 finalizer.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t z = seed ^ h;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string format_double(double v)
{
    if (v == 0.0) return "0";
    return fmt::format("{:.17g}", v);
}

} // namespace carbonsched
