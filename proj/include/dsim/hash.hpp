#pragma once

#include <bit>
#include <cstdint>
#include <vector>

#include "dsim/graph.hpp"
#include "dsim/rng.hpp"

namespace dsim {

// GF(2^64) with reduction polynomial x^64 + x^4 + x^3 + x + 1.
inline std::uint64_t gf64_mulx(std::uint64_t a) {
  std::uint64_t carry = a >> 63;
  a <<= 1;
  return carry ? a ^ 0x1b : a;
}

inline std::uint64_t gf64_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  while (b) {
    if (b & 1) r ^= a;
    b >>= 1;
    a = gf64_mulx(a);
  }
  return r;
}

// Degree-(k-1) polynomial over GF(2^64) with random coefficients: evaluations
// at k distinct points are independent and uniform. Computable at both ends
// of an edge from the shared coefficients alone.
struct HashSpec {
  std::vector<std::uint64_t> coeffs;

  static HashSpec random(Rng& rng, unsigned k) {
    HashSpec s;
    s.coeffs.resize(k);
    for (auto& c : s.coeffs) c = rng.next();
    return s;
  }

  unsigned k() const { return static_cast<unsigned>(coeffs.size()); }
  std::uint64_t serialized_bits() const { return 64 * coeffs.size(); }

  std::uint64_t eval(std::uint64_t x) const {
    std::uint64_t r = 0;
    for (std::size_t i = coeffs.size(); i-- > 0;) r = gf64_mul(r, x) ^ coeffs[i];
    return r;
  }
  bool bit(std::uint64_t x) const { return eval(x) & 1; }
};

// Low-bit evaluator for pairwise (k = 2) specs. lowbit(c0 + c1*x) is GF(2)-
// linear in the bits of x, so one precomputed 64-bit mask turns each
// evaluation into a popcount.
struct ParityHash {
  std::uint64_t mask = 0;
  bool base = false;

  explicit ParityHash(const HashSpec& spec) {
    base = spec.coeffs[0] & 1;
    std::uint64_t t = spec.coeffs.size() > 1 ? spec.coeffs[1] : 0;
    for (unsigned i = 0; i < 64; ++i) {
      mask |= static_cast<std::uint64_t>(t & 1) << i;
      t = gf64_mulx(t);
    }
  }

  bool bit(std::uint64_t x) const {
    return ((std::popcount(mask & x) & 1) != 0) != base;
  }
};

// Sampling key for one parallel copy of an edge; injective as long as the
// copy index fits above the two packed endpoint ids.
inline std::uint64_t sample_key(EdgeId eid, std::uint32_t copy_index, unsigned id_bits) {
  return (static_cast<std::uint64_t>(copy_index) << (2 * id_bits)) | eid.encode(id_bits);
}

// Membership at dyadic probability p = 2^-p_exponent by threshold comparison,
// so samples at consecutive exponents are nested.
inline bool sample_membership(const HashSpec& spec, std::uint64_t key, unsigned p_exponent) {
  if (p_exponent == 0) return true;
  if (p_exponent >= 64) return false;
  return (spec.eval(key) >> (64 - p_exponent)) == 0;
}

// Smallest t with 2^-t <= ... rounded the other way: the next power of 1/2
// at or above p_raw, as an exponent (p = 2^-t >= p_raw).
inline unsigned dyadic_exponent_at_least(double p_raw) {
  if (p_raw >= 1.0) return 0;
  unsigned t = 0;
  double p = 1.0;
  while (p / 2 >= p_raw && t < 63) {
    p /= 2;
    ++t;
  }
  return t;
}

}  // namespace dsim
