#pragma once

#include <cstdint>
#include <vector>

namespace hiercva {

// Plug-in split of the loss variance into the inner (X-driven) part Q and
// the outer (Y-driven) part R; q + r equals the pooled variance identically.
struct QRDecomposition {
    double q = 0.0;
    double r = 0.0;
    double total = 0.0;
    std::size_t n_pairs = 0;
    double q_std_error = 0.0;
    double r_std_error = 0.0;
};

// Per outer path k, two conditionally independent loss evaluations (replicas
// sharing the market path): R = Cov(g1, g2), total = pooled variance,
// Q = total - R.
QRDecomposition estimate_qr(const std::vector<double>& g1, const std::vector<double>& g2);

// Variance-optimal hierarchical factor sqrt(Q P / R). Returns +infinity with
// r_floored=true when R (after the MC-noise clamp) is not positive.
struct OptimalN {
    double value = 0.0;
    bool r_floored = false;
};
OptimalN optimal_n(double q, double r, double p);

// Cost ratio from two timings at equal M: B/B' = (P+N)/(P+N') gives
// P = (N' T - N T') / (T' - T).
double estimate_p(double n1, double t1, double n2, double t2);

// Budget-constrained outer count M = floor(B / (N + P)) >= 1.
long long heuristic_m(double budget, double n, double p);

// Sub-Gaussian / Lipschitz constants of the confidence-based M formula.
struct BoundParams {
    double b1 = 0.0, b2 = 0.0;      // sub-Gaussian scales
    double l1 = 0.0, l2 = 0.0;      // Lipschitz deviation bounds
    double l_bar = 0.0, l_prime = 0.0;  // mean Lipschitz constant and chosen L' > L_bar
    double diameter = 0.0;          // parameter-space diameter D
    long long dim = 1;              // parameter count d
    double epsilon = 0.0, delta = 0.0;  // 0 < delta < epsilon
    double alpha = 0.0;             // 1 - confidence
    double u = 0.5;                 // confidence split weight in (0,1)

    void validate() const;
};

// M = ceil(max of the two displayed terms); nonincreasing in N with a
// strictly positive large-N limit. Computed in log space so large d is safe.
long long required_m(const BoundParams& bounds, double n);

// Heuristic-1 aggregation of a Q/R trace: rounded arithmetic mean of
// sqrt(Q P / R) over the trace entries (median also reported).
struct TraceEntry {
    double q = 0.0;
    double r = 0.0;
};
struct AverageN {
    long long mean_n = 0;
    long long median_n = 0;
    std::vector<double> per_entry;  // the individual sqrt(QP/R) values
};
AverageN average_optimal_n(const std::vector<TraceEntry>& trace, double p);

}  // namespace hiercva
