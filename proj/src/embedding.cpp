#include "zsd/embedding.hpp"

#include <cmath>
#include <stdexcept>

#include "zsd/kernels.hpp"

namespace zsd {

double norm(std::span<const double> v) noexcept {
  return std::sqrt(kernels::dot(v.data(), v.data(), v.size()));
}

Embedding normalize(std::span<const double> v) {
  const double n = norm(v);
  if (n == 0.0 || !std::isfinite(n)) {
    throw std::invalid_argument("degenerate embedding");
  }
  Embedding out(v.begin(), v.end());
  kernels::scale(out.data(), 1.0 / n, out.size());
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  }
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0 || !std::isfinite(na) || !std::isfinite(nb)) {
    throw std::invalid_argument("cosine_similarity: zero-norm argument");
  }
  const double c = kernels::dot(a.data(), b.data(), a.size()) / (na * nb);
  return c < -1.0 ? -1.0 : (c > 1.0 ? 1.0 : c);
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Embedding pseudo_encoder(std::string_view text, std::size_t dim,
                         std::uint64_t seed) {
  if (dim < 2) {
    throw std::invalid_argument("pseudo_encoder: dim must be >= 2");
  }
  std::uint64_t state = fnv1a64(text) ^ (seed * 0x9e3779b97f4a7c15ULL);
  Embedding v(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    // 53 uniform bits -> [0, 1) -> [-1, 1)
    const double u =
        static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    v[i] = 2.0 * u - 1.0;
  }
  return normalize(v);
}

}  // namespace zsd
