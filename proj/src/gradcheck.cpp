#include "infotok/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace infotok::ad {

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (passed ? "pass" : "FAIL") << ": max relative error " << max_rel_error
       << " (tolerance " << tolerance << ") at input " << worst_input << " coord " << worst_coord
       << ", analytic " << worst_analytic << " vs numeric " << worst_numeric;
    return os.str();
}

GradCheckReport grad_check(Graph& graph, NodeId output, const std::vector<Tensor>& point,
                           double eps, double tolerance) {
    if (!(eps > 0.0 && eps <= 1e-2)) {
        throw std::invalid_argument("grad_check: eps must lie in (0, 1e-2]");
    }
    if (shape_numel(graph.node_shape(output)) != 1) {
        throw std::invalid_argument("grad_check: output node must be scalar");
    }

    graph.forward(point);
    const auto grads = graph.backward(output, Tensor::scalar(1.0));

    GradCheckReport report;
    report.tolerance = tolerance;

    std::vector<Tensor> probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        for (std::size_t c = 0; c < point[i].size(); ++c) {
            const double saved = probe[i][c];
            probe[i][c] = saved + eps;
            graph.forward(probe);
            const double fp = graph.scalar_value(output);
            probe[i][c] = saved - eps;
            graph.forward(probe);
            const double fm = graph.scalar_value(output);
            probe[i][c] = saved;

            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic = grads[i].grad()[c];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            const double rel = std::abs(analytic - numeric) / denom;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_input = i;
                report.worst_coord = c;
                report.worst_analytic = analytic;
                report.worst_numeric = numeric;
            }
        }
    }
    report.passed = report.max_rel_error < tolerance;
    return report;
}

GradCheckReport grad_check(Graph& graph, const std::vector<Tensor>& point, double eps,
                           double tolerance) {
    return grad_check(graph, graph.last_node(), point, eps, tolerance);
}

} // namespace infotok::ad
