#pragma once

#include <cstdint>
#include <vector>

namespace hiercva {

// Counter-based splittable random stream (Philox-2x64, 10 rounds).
//
// A stream is identified by its (seed, lineage-of-split-keys); the generator
// key is a hash of that identity, so two streams with the same identity
// produce identical sequences and splitting is a pure function of
// (identity, key) -- drawing from a stream never affects its children.
// Streams are plain values: each simulation worker owns its own split and no
// state is shared.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed);

    // Child stream for lineage key `key`; the parent remains usable.
    RandomStream split(std::uint64_t key) const;

    std::uint64_t seed() const { return seed_; }
    const std::vector<std::uint64_t>& lineage() const { return lineage_; }

    // Raw 64-bit output (advances the counter).
    std::uint64_t next_u64();

    // Uniform on the open interval (0,1); never returns 0 or 1.
    double next_uniform();

    // N(0,1) via inverse-CDF on (0,1): order-stable under splitting, no
    // rejection-count drift.
    double next_normal();

    // Exp(1), strictly positive.
    double next_exponential();

    std::vector<double> sample_normals(std::size_t count);
    std::vector<double> sample_exponentials(std::size_t count);
    void fill_normals(double* out, std::size_t count);

private:
    RandomStream() = default;

    std::uint64_t key_ = 0;      // derived from (seed, lineage)
    std::uint64_t counter_ = 0;  // block counter
    std::uint64_t cached_ = 0;   // second word of the current block
    bool has_cached_ = false;
    std::uint64_t seed_ = 0;
    std::vector<std::uint64_t> lineage_;
};

// Inverse of the standard normal CDF, accurate to ~1e-15 relative
// (rational approximation plus one Halley refinement).
double inverse_normal_cdf(double p);

}  // namespace hiercva
