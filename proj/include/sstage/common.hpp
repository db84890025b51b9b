#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sstage {

// ---------------------------------------------------------------------------
// Error taxonomy. User-facing commands map UserError subtypes to exit code 1
// and everything else to exit code 2.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad input from the outside world (files, flags, config).
struct UserError : Error {
    using Error::Error;
};

struct ParseError : UserError {
    ParseError(const std::string& msg, long line)
        : UserError("parse error at line " + std::to_string(line) + ": " + msg), line_number(line) {}
    long line_number;
};

struct ParameterError : UserError {
    using UserError::UserError;
};

struct DataError : UserError {
    using UserError::UserError;
};

struct IoError : UserError {
    using UserError::UserError;
};

// Violated API contract or shape algebra; indicates a caller bug.
struct ContractError : Error {
    using Error::Error;
};

struct DimensionError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. std::uniform_*_distribution is implementation-defined,
// so every mapping from raw engine output to a value is spelled out here;
// streams are reproducible bit-for-bit across standard libraries.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) via rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ContractError("Rng::below: n must be positive");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates with the explicit draw above; independent of std::shuffle.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
        }
    }

    // Derived generator for an independent stream (per-M training runs etc.).
    Rng derive(std::uint64_t salt) const { return Rng(splitmix64(seed_ ^ splitmix64(salt))); }

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
};

}  // namespace sstage
