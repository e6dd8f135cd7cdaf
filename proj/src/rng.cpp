#include "hiercva/rng.hpp"

#include <cmath>

namespace hiercva {

namespace {

constexpr std::uint64_t kPhiloxM = 0xD2B74407B1CE6E93ULL;
constexpr std::uint64_t kPhiloxW = 0x9E3779B97F4A7C15ULL;  // golden ratio
constexpr std::uint64_t kRootSalt = 0x9FB21C651E98DF25ULL;
constexpr std::uint64_t kSplitSalt = 0x632BE59BD9B4E019ULL;

// SplitMix64 finalizer (Stafford mix 13).
std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
    unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
    hi = static_cast<std::uint64_t>(p >> 64);
    lo = static_cast<std::uint64_t>(p);
}

// One Philox-2x64-10 block: counter (c0,c1) under key k.
void philox2x64(std::uint64_t c0, std::uint64_t c1, std::uint64_t k,
                std::uint64_t& out0, std::uint64_t& out1) {
    for (int round = 0; round < 10; ++round) {
        std::uint64_t hi, lo;
        mulhilo(kPhiloxM, c0, hi, lo);
        c0 = hi ^ k ^ c1;
        c1 = lo;
        k += kPhiloxW;
    }
    out0 = c0;
    out1 = c1;
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed) : seed_(seed) {
    key_ = mix64(seed ^ kRootSalt);
}

RandomStream RandomStream::split(std::uint64_t key) const {
    RandomStream child;
    child.seed_ = seed_;
    child.lineage_ = lineage_;
    child.lineage_.push_back(key);
    child.key_ = mix64(key_ ^ (mix64(key + kSplitSalt) + kPhiloxW + (key_ << 6) + (key_ >> 2)));
    return child;
}

std::uint64_t RandomStream::next_u64() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    std::uint64_t out0, out1;
    philox2x64(counter_++, 0, key_, out0, out1);
    cached_ = out1;
    has_cached_ = true;
    return out0;
}

double RandomStream::next_uniform() {
    // 53 significant bits, centered in the bin: strictly inside (0,1).
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::next_normal() { return inverse_normal_cdf(next_uniform()); }

double RandomStream::next_exponential() { return -std::log(next_uniform()); }

std::vector<double> RandomStream::sample_normals(std::size_t count) {
    std::vector<double> out(count);
    fill_normals(out.data(), count);
    return out;
}

void RandomStream::fill_normals(double* out, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) out[i] = next_normal();
}

std::vector<double> RandomStream::sample_exponentials(std::size_t count) {
    std::vector<double> out(count);
    for (auto& x : out) x = next_exponential();
    return out;
}

double inverse_normal_cdf(double p) {
    // Acklam's rational approximation, then one Halley step against erfc.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;

    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // Halley refinement: e = Phi(x) - p.
    double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

}  // namespace hiercva
