#include "hiercva/defaults.hpp"

#include "hiercva/errors.hpp"
#include "hiercva/parallel.hpp"

namespace hiercva {

DefaultBlock::DefaultBlock(int n_paths, int n_replicas, int n_steps, int n_names)
    : n_paths_(n_paths), n_replicas_(n_replicas), n_steps_(n_steps), n_names_(n_names) {
    steps_.assign(static_cast<std::size_t>(n_paths) * n_replicas * n_names, kNoDefault);
}

std::optional<int> default_step(std::span<const double> hazard_path, double eps) {
    for (std::size_t i = 0; i < hazard_path.size(); ++i) {
        if (hazard_path[i] >= eps) return static_cast<int>(i);
    }
    return std::nullopt;
}

DefaultBlock sample_default_block(const MarketBlock& market, int n_replicas,
                                  const RandomStream& stream) {
    if (n_replicas < 1) throw contract_error("sample_default_block: n_replicas must be >= 1");
    const int M = market.n_paths();
    const int C = market.n_credit();
    const int n = market.n_steps();
    DefaultBlock block(M, n_replicas, n, C);

    parallel_for(M, [&](int k) {
        RandomStream path_stream = stream.split(static_cast<std::uint64_t>(k));
        std::vector<double> hazard((n + 1));
        // Hazard paths are per name; fetch them once per (k, c).
        std::vector<std::vector<double>> hz(C);
        for (int c = 0; c < C; ++c) hz[c] = market.hazard_path(k, c);
        for (int l = 0; l < n_replicas; ++l) {
            RandomStream rep_stream = path_stream.split(static_cast<std::uint64_t>(l));
            for (int c = 0; c < C; ++c) {
                const double eps = rep_stream.next_exponential();
                auto hit = default_step(hz[c], eps);
                block.default_step(k, l, c) =
                    hit ? static_cast<std::uint16_t>(*hit) : kNoDefault;
            }
        }
    });
    return block;
}

std::optional<int> resample_continuation(std::span<const double> hazard_path, int survived_until,
                                         RandomStream& stream) {
    if (survived_until < 0 || survived_until >= static_cast<int>(hazard_path.size()))
        throw contract_error("resample_continuation: survival step out of range");
    const double base = hazard_path[survived_until];
    const double eps = stream.next_exponential();
    for (std::size_t j = survived_until + 1; j < hazard_path.size(); ++j) {
        if (hazard_path[j] - base >= eps) return static_cast<int>(j);
    }
    return std::nullopt;
}

std::optional<int> resample_continuation(const MarketBlock& market, const DefaultBlock& defaults,
                                         int k, int l, int c, int survived_until,
                                         RandomStream& stream) {
    if (defaults.default_step(k, l, c) <= survived_until)
        throw contract_error("resample_continuation: name already defaulted at this step");
    auto hz = market.hazard_path(k, c);
    return resample_continuation(std::span<const double>(hz), survived_until, stream);
}

}  // namespace hiercva
