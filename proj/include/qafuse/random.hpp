#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include <boost/random/mersenne_twister.hpp>

namespace qafuse {

// Boost distributions are used throughout instead of <random> ones so that
// seeded streams are identical across standard library implementations.
using Engine = boost::random::mt19937_64;

/// Mix a base seed with a stream id (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// FNV-1a, for turning names into stream ids.
std::uint64_t stable_hash(std::string_view text);

/// Uniform integer in [0, n).
std::size_t uniform_index(Engine& engine, std::size_t n);

double uniform_real(Engine& engine, double lo, double hi);

/// `count` distinct values from [0, n) in draw order (partial Fisher-Yates).
std::vector<std::size_t> sample_without_replacement(Engine& engine, std::size_t n,
                                                    std::size_t count);

void shuffle_indices(Engine& engine, std::vector<std::size_t>& indices);

}  // namespace qafuse
