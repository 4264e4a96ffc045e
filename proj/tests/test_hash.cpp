#include <doctest.h>

#include <cmath>

#include "dsim/hash.hpp"
#include "dsim/rng.hpp"

using namespace dsim;

TEST_CASE("gf64 field axioms on random elements") {
  Rng rng(1, 0);
  for (int t = 0; t < 500; ++t) {
    std::uint64_t a = rng.next(), b = rng.next(), c = rng.next();
    CHECK(gf64_mul(a, b) == gf64_mul(b, a));
    CHECK(gf64_mul(a, gf64_mul(b, c)) == gf64_mul(gf64_mul(a, b), c));
    CHECK(gf64_mul(a, b ^ c) == (gf64_mul(a, b) ^ gf64_mul(a, c)));
    CHECK(gf64_mul(a, 1) == a);
    CHECK(gf64_mul(a, 2) == gf64_mulx(a));
    if (a && b) CHECK(gf64_mul(a, b) != 0);
  }
}

TEST_CASE("parity evaluator matches the polynomial low bit") {
  Rng rng(2, 0);
  for (int t = 0; t < 200; ++t) {
    HashSpec spec = HashSpec::random(rng, 2);
    ParityHash fast(spec);
    for (int i = 0; i < 50; ++i) {
      std::uint64_t x = rng.next();
      CHECK(fast.bit(x) == spec.bit(x));
    }
  }
}

TEST_CASE("hash bit is unbiased for a fixed key") {
  Rng rng(3, 0);
  std::uint64_t key = 0x123456789abcdefULL;
  int ones = 0;
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) ones += HashSpec::random(rng, 2).bit(key);
  double freq = static_cast<double>(ones) / trials;
  CHECK(freq > 0.48);
  CHECK(freq < 0.52);
}

TEST_CASE("sample membership at p = 1 and p = 1/2") {
  Rng rng(4, 0);
  std::uint64_t key = sample_key(EdgeId(3, 17), 0, 10);
  int hits = 0;
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) {
    HashSpec spec = HashSpec::random(rng, 8);
    CHECK(sample_membership(spec, key, 0));
    hits += sample_membership(spec, key, 1);
  }
  double freq = static_cast<double>(hits) / trials;
  CHECK(freq > 0.495);
  CHECK(freq < 0.505);
}

TEST_CASE("two fixed edges sample almost independently") {
  Rng rng(5, 0);
  std::uint64_t ka = sample_key(EdgeId(2, 9), 0, 10);
  std::uint64_t kb = sample_key(EdgeId(5, 11), 0, 10);
  const int trials = 100000;
  int a = 0, b = 0, ab = 0;
  for (int t = 0; t < trials; ++t) {
    HashSpec spec = HashSpec::random(rng, 8);
    bool sa = sample_membership(spec, ka, 1), sb = sample_membership(spec, kb, 1);
    a += sa;
    b += sb;
    ab += sa && sb;
  }
  double pa = a / double(trials), pb = b / double(trials), pab = ab / double(trials);
  double cov = pab - pa * pb;
  double sigma = std::sqrt(0.25 * 0.75 / trials);  // rough scale for the joint estimate
  CHECK(std::abs(cov) < 3 * sigma + 0.002);
}

TEST_CASE("samples are nested across dyadic levels") {
  Rng rng(6, 0);
  for (int t = 0; t < 200; ++t) {
    HashSpec spec = HashSpec::random(rng, 4);
    std::uint64_t key = rng.next() | 1;
    for (unsigned e = 8; e > 0; --e)
      if (sample_membership(spec, key, e)) CHECK(sample_membership(spec, key, e - 1));
  }
}

TEST_CASE("dyadic rounding goes up") {
  CHECK(dyadic_exponent_at_least(1.0) == 0);
  CHECK(dyadic_exponent_at_least(0.87) == 0);
  CHECK(dyadic_exponent_at_least(0.5) == 1);
  CHECK(dyadic_exponent_at_least(0.3) == 1);
  CHECK(dyadic_exponent_at_least(0.25) == 2);
  CHECK(dyadic_exponent_at_least(0.2) == 2);
}

TEST_CASE("copy salted keys are distinct") {
  unsigned id_bits = 25;
  auto k0 = sample_key(EdgeId(100, 200), 0, id_bits);
  auto k1 = sample_key(EdgeId(100, 200), 1, id_bits);
  CHECK(k0 != k1);
  CHECK(EdgeId::decode(k0 & ((std::uint64_t{1} << 50) - 1), id_bits) == EdgeId(100, 200));
}
