#pragma once

#include <cstdint>

namespace edgesim {

// Simulation time in integer microseconds since simulation start.
// Integer time keeps event ordering exact across platforms.
using SimTime = std::int64_t;

constexpr SimTime kUs = 1;
constexpr SimTime kMs = 1000;
constexpr SimTime kSec = 1'000'000;

constexpr SimTime us(std::int64_t v) { return v; }
constexpr SimTime ms(std::int64_t v) { return v * kMs; }
constexpr SimTime sec(std::int64_t v) { return v * kSec; }

}  // namespace edgesim
