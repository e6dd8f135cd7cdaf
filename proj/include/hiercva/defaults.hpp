#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hiercva/market.hpp"
#include "hiercva/rng.hpp"

namespace hiercva {

// No default at or before the last stored pricing step.
inline constexpr std::uint16_t kNoDefault = 0xFFFF;

// M x N conditionally i.i.d. default replicas. The logical contract is the
// absorbing indicator tensor D[k][l][i][c] = 1{tau_c <= t_i}; storage is the
// compact per-name first-default step (kNoDefault when the name survives the
// whole grid). Name 0 is the bank.
class DefaultBlock {
public:
    DefaultBlock(int n_paths, int n_replicas, int n_steps, int n_names);

    int n_paths() const { return n_paths_; }
    int n_replicas() const { return n_replicas_; }
    int n_steps() const { return n_steps_; }
    int n_names() const { return n_names_; }

    std::uint16_t default_step(int k, int l, int c) const { return steps_[idx(k, l, c)]; }
    std::uint16_t& default_step(int k, int l, int c) { return steps_[idx(k, l, c)]; }

    // Indicator view: defaulted at or before pricing step i.
    bool indicator(int k, int l, int i, int c) const { return default_step(k, l, c) <= i; }

    std::size_t memory_bytes() const { return steps_.size() * sizeof(std::uint16_t); }

private:
    std::size_t idx(int k, int l, int c) const {
        return (static_cast<std::size_t>(k) * n_replicas_ + l) * n_names_ + c;
    }
    int n_paths_, n_replicas_, n_steps_, n_names_;
    std::vector<std::uint16_t> steps_;
};

// Smallest pricing step i with Lambda_i >= eps, checking pricing steps only.
std::optional<int> default_step(std::span<const double> hazard_path, double eps);

// One exponential threshold per credit name per replica; replica (k,l) draws
// from stream.split(k).split(l).
DefaultBlock sample_default_block(const MarketBlock& market, int n_replicas,
                                  const RandomStream& stream);

// Conditional default time given survival to step i, by memorylessness:
// fresh eps' ~ Exp(1), first j > i with Lambda_j - Lambda_i >= eps'.
std::optional<int> resample_continuation(std::span<const double> hazard_path, int survived_until,
                                         RandomStream& stream);

// Checked variant: throws contract_error if replica (k,l) of name c has
// already defaulted by step i.
std::optional<int> resample_continuation(const MarketBlock& market, const DefaultBlock& defaults,
                                         int k, int l, int c, int survived_until,
                                         RandomStream& stream);

}  // namespace hiercva
