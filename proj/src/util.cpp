#include "pmpo/util.hpp"

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace pmpo {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
    return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

uint64_t DetRng::next() {
    state_ = splitmix64(state_ + 0x632be59bd9b4e019ULL);
    return state_;
}

uint64_t DetRng::bounded(uint64_t n) {
    assert(n > 0);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
}

void shuffle_indices(std::vector<std::size_t>& idx, DetRng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.bounded(i)]);
    }
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, DetRng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle_indices(idx, rng);
    if (k < n) idx.resize(k);
    return idx;
}

std::string fnv1a_hex(std::string_view data) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

static bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string trim_trailing(std::string_view s) {
    std::size_t e = s.size();
    while (e > 0 && is_space(s[e - 1])) --e;
    return std::string(s.substr(0, e));
}

std::string substitute_placeholders(
    std::string_view tmpl,
    const std::function<const std::string*(std::string_view)>& lookup) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            std::size_t close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                std::string_view name = tmpl.substr(i + 1, close - i - 1);
                if (const std::string* value = lookup(name)) {
                    out += *value;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += tmpl[i];
        ++i;
    }
    return out;
}

std::string truncate_utf8(std::string_view s, std::size_t max_bytes) {
    if (s.size() <= max_bytes) return std::string(s);
    std::size_t cut = max_bytes;
    // back off continuation bytes so we never split a code point
    while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
    return std::string(s.substr(0, cut)) + "...";
}

// Decimal string rounding with half-even ties, applied to the shortest
// round-trip representation of the double. A plain printf("%.*f") rounds the
// binary value, which turns decimal ties like 0.12345 into 0.1235.
std::string format_fixed_half_even(double value, int decimals) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";

    bool negative = std::signbit(value);
    double mag = std::fabs(value);

    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), mag);
    (void)ec;
    std::string digits(buf, ptr);

    // normalize scientific notation into plain decimal digits + exponent
    int exp10 = 0;
    if (auto epos = digits.find_first_of("eE"); epos != std::string::npos) {
        exp10 = std::atoi(digits.c_str() + epos + 1);
        digits.resize(epos);
    }
    std::string intpart = digits, fracpart;
    if (auto dot = digits.find('.'); dot != std::string::npos) {
        intpart = digits.substr(0, dot);
        fracpart = digits.substr(dot + 1);
    }
    std::string all = intpart + fracpart;
    int point = static_cast<int>(intpart.size()) + exp10;  // digits left of the point

    // We want to keep `point + decimals` digits of `all`.
    int keep = point + decimals;
    std::string kept;
    bool round_up = false;
    if (keep <= 0) {
        kept = "";
        // value entirely below the last kept place; only the tie/over check remains
        if (keep == 0 && !all.empty()) {
            // compare 0.<all> against half a unit in the last place
            if (all[0] > '5') round_up = true;
            else if (all[0] == '5') {
                bool rest_nonzero = all.find_first_not_of('0', 1) != std::string::npos;
                round_up = rest_nonzero;  // exact tie rounds to even; even digit here is 0
            }
        }
    } else if (static_cast<std::size_t>(keep) >= all.size()) {
        kept = all + std::string(keep - all.size(), '0');
    } else {
        kept = all.substr(0, keep);
        char next = all[keep];
        bool rest_nonzero = all.find_first_not_of('0', keep + 1) != std::string::npos;
        if (next > '5' || (next == '5' && rest_nonzero)) {
            round_up = true;
        } else if (next == '5' && !rest_nonzero) {
            round_up = ((kept.back() - '0') % 2) == 1;  // half-even
        }
    }

    if (round_up) {
        int i = static_cast<int>(kept.size()) - 1;
        while (i >= 0) {
            if (kept[i] == '9') {
                kept[i] = '0';
                --i;
            } else {
                ++kept[i];
                break;
            }
        }
        if (i < 0) {
            kept.insert(kept.begin(), '1');
            ++point;
        }
    }

    // pad to final width point + decimals
    int width = point + decimals;
    if (static_cast<int>(kept.size()) < width) {
        kept.insert(kept.begin(), width - kept.size(), '0');
    }
    std::string result;
    if (point <= 0) {
        result = "0";
        if (decimals > 0) {
            std::string frac(static_cast<std::size_t>(-point), '0');
            frac += kept;
            frac.resize(decimals, '0');
            result += "." + frac;
        }
    } else {
        result = kept.substr(0, point);
        if (result.empty()) result = "0";
        if (decimals > 0) result += "." + kept.substr(point);
    }
    // suppress "-0.0000"
    if (negative && result.find_first_not_of("0.") != std::string::npos) {
        result.insert(result.begin(), '-');
    }
    return result;
}

std::string format_signed_fixed(double value, int decimals) {
    std::string s = format_fixed_half_even(value, decimals);
    if (!s.empty() && s[0] != '-') s.insert(s.begin(), '+');
    return s;
}

}  // namespace pmpo
