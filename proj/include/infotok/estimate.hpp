#pragma once

namespace infotok {

// Mean and standard error of a Monte-Carlo estimator.
struct MonteCarloEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

} // namespace infotok
