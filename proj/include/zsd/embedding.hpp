#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace zsd {

// Class-label vector in the alignment space. Stored in 64-bit precision;
// file ingestion widens 32-bit values.
using Embedding = std::vector<double>;

// Returns v / |v|. Throws std::invalid_argument("degenerate embedding") when
// the norm is zero or non-finite.
Embedding normalize(std::span<const double> v);

double norm(std::span<const double> v) noexcept;

// Cosine of the angle between a and b, clamped to [-1, 1]. Throws on
// dimension mismatch or a zero-norm argument.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Deterministic stand-in for a text encoder: unit-norm vector derived from a
// keyed hash of the text. Same (text, dim, seed) always yields the same
// vector, bit for bit, on any platform.
Embedding pseudo_encoder(std::string_view text, std::size_t dim,
                         std::uint64_t seed);

}  // namespace zsd
