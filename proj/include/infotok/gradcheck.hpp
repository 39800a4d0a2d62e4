#pragma once

#include "infotok/graph.hpp"

#include <string>
#include <vector>

namespace infotok::ad {

struct GradCheckReport {
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_coord = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    bool passed = false;

    std::string summary() const;
};

// Compares reverse-mode gradients of a scalar-output graph against central
// finite differences (f(x+eps) - f(x-eps)) / (2 eps), coordinate by
// coordinate. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
// denominator. The checked output is `output`; the overload without it uses
// the last node.
GradCheckReport grad_check(Graph& graph, NodeId output, const std::vector<Tensor>& point,
                           double eps, double tolerance);
GradCheckReport grad_check(Graph& graph, const std::vector<Tensor>& point, double eps,
                           double tolerance);

} // namespace infotok::ad
