#pragma once

// Generated by tools/lv_standardize.cpp; do not edit by hand.

#include <array>
#include <cstdint>

namespace lfi::lv_constants {

inline constexpr std::uint64_t seed = 20240601;
inline constexpr std::size_t n_simulations = 10000;
inline constexpr std::array<double, 9> summary_mean{8387.3636880789381, 55.540192715231946, 3.7099559714174766, 6.1344390663443473, 0.21453939268783215, 0.14218378114035896, 0.87472473907351833, 0.76876842286232827, 0.25973280106858576};
inline constexpr std::array<double, 9> summary_scale{67647.151637020404, 101.07164049237815, 3.3689717899276337, 1.2609904353097843, 0.32070495104516322, 0.2665206608748521, 0.16522656814332837, 0.26115213066232351, 0.3475608167308028};

}  // namespace lfi::lv_constants
