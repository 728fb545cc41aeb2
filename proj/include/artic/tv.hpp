#pragma once

#include <array>

namespace artic {

// Tract-variable channel order used everywhere: six constriction variables,
// velic aperture, then the two source channels.
inline constexpr int kNumTvs = 9;
inline constexpr std::array<const char*, kNumTvs> kTvChannelNames = {
    "LA", "LP", "TBCL", "TBCD", "TTCL", "TTCD", "VP", "Periodicity", "Aperiodicity"};

}  // namespace artic
