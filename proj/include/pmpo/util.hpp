#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace pmpo {

// splitmix64; used to derive per-(iteration, slot) seeds from the run seed.
uint64_t splitmix64(uint64_t x);

// Deterministic seed derivation: chains splitmix64 over the parts.
uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0);

// Minimal deterministic generator (xorshift-free, pinned algorithm) so results
// do not depend on the standard library's distribution implementations.
class DetRng {
  public:
    explicit DetRng(uint64_t seed) : state_(seed) {}
    uint64_t next();
    // Unbiased draw in [0, n) via rejection. n must be > 0.
    uint64_t bounded(uint64_t n);

  private:
    uint64_t state_;
};

// k distinct indices from [0, n), order by draw; k > n returns all n shuffled.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, DetRng& rng);

// Fisher–Yates with DetRng.
void shuffle_indices(std::vector<std::size_t>& idx, DetRng& rng);

// FNV-1a 64-bit, rendered as 16 hex chars. Used for content fingerprints.
std::string fnv1a_hex(std::string_view data);

std::string trim(std::string_view s);
std::string trim_trailing(std::string_view s);

// Replaces each "{name}" placeholder found in `tmpl` using `lookup`; placeholders
// are located in the template only, never inside substituted values. Unknown
// placeholders are left untouched.
std::string substitute_placeholders(
    std::string_view tmpl,
    const std::function<const std::string*(std::string_view)>& lookup);

// Truncates to at most max_bytes without splitting a UTF-8 sequence; appends
// "..." when anything was cut.
std::string truncate_utf8(std::string_view s, std::size_t max_bytes);

// Fixed-point decimal with round-half-even ties, e.g. (0.12345, 4) -> "0.1234".
// Ties are resolved on the shortest decimal representation of the double.
std::string format_fixed_half_even(double value, int decimals);

// Same, with an explicit leading '+' for non-negative values.
std::string format_signed_fixed(double value, int decimals);

}  // namespace pmpo
