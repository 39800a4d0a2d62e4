#pragma once

#include <string>
#include <vector>

namespace infotok::oracles {

struct SuiteResult {
    std::string name;
    bool passed = true;
    std::vector<std::string> lines;

    void check(bool ok, const std::string& line);
};

// Closed-form Gaussian KL against its Monte-Carlo estimate: 50 random
// posteriors, d <= 8, 10^6 samples each, agreement within 3 standard errors.
SuiteResult kl_suite();

// Exact discrete MI values and symmetry, the InfoNCE upper bound on 200
// random batches, and the mixture-channel bound gap on 20 random channels.
SuiteResult mi_suite();

// Brute-force data-processing inequality: 100 seeded 4x4 joints, every
// deterministic map onto 3 symbols.
SuiteResult dpi_suite();

// Linear CKA self-similarity, orthogonal and scaling invariance, and the
// independent-data null.
SuiteResult cka_suite();

// Finite-difference checks: every graph primitive at 100 random points
// (tolerance 1e-5) and the full training objective at 5 random
// configurations (tolerance 1e-4).
SuiteResult gradcheck_suite();

} // namespace infotok::oracles
