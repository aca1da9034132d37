#include "skillstack/criteria.hpp"

#include <cmath>

namespace skillstack {

double cyclic_distance_deg(double a, double b) { return cyclic_distance_deg_t(a, b); }

double normalization_scale(const Criterion& c) {
    if (c.operation == CriterionOp::CloseTo) return *c.tolerance;
    if (c.target != 0.0) return std::fabs(c.target);
    return 1.0;
}

namespace {

ResponseValues<double> as_values(const StackResponse& r) {
    return {r.R, r.T, {r.t0.real(), r.t0.imag()}};
}

} // namespace

double raw_margin(const Criterion& c, const StackResponse& r) {
    return raw_margin_t(c, metric_value_t(c, as_values(r)));
}

CriteriaReport evaluate_task(const TaskSpec& task, const ResponseSet& responses) {
    CriteriaReport report;
    report.outcomes.reserve(task.criteria.size());
    int passed = 0;
    for (const Criterion& c : task.criteria) {
        const std::size_t wl = static_cast<std::size_t>(c.wavelength_index);
        const std::size_t src = static_cast<std::size_t>(c.source_index);
        if (src >= responses.n_sources ||
            (wl + 1) * responses.n_sources > responses.flat.size())
            throw CriteriaError(CriteriaError::Code::MissingResponse,
                                "no response for criterion (wavelength " + std::to_string(wl) +
                                    ", source " + std::to_string(src) + ")");
        CriterionOutcome out;
        out.raw_margin = raw_margin(c, responses.at(wl, src));
        out.scale = normalization_scale(c);
        out.normalized_margin = out.raw_margin / out.scale;
        out.passed = out.raw_margin >= 0.0;
        if (out.passed) ++passed;
        report.outcomes.push_back(out);
    }
    const double k = static_cast<double>(task.criteria.size());
    report.sg = passed == static_cast<int>(task.criteria.size()) ? 1 : 0;
    report.cpf = passed / k;
    report.bm = report.outcomes.front().normalized_margin;
    for (const auto& o : report.outcomes)
        if (o.normalized_margin < report.bm) report.bm = o.normalized_margin;
    return report;
}

} // namespace skillstack
