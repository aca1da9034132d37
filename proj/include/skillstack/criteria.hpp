#pragma once

#include <stdexcept>
#include <vector>

#include "skillstack/physics.hpp"
#include "skillstack/task.hpp"

namespace skillstack {

struct CriteriaError : std::runtime_error {
    enum class Code { MetricUnavailable, MissingResponse };
    Code code;
    CriteriaError(Code c, const std::string& what) : std::runtime_error(what), code(c) {}
};

struct CriterionOutcome {
    double raw_margin = 0.0;
    double scale = 1.0;
    double normalized_margin = 0.0;
    bool passed = false;

    bool operator==(const CriterionOutcome&) const = default;
};

struct CriteriaReport {
    std::vector<CriterionOutcome> outcomes;
    int sg = 0;
    double cpf = 0.0;
    double bm = 0.0;

    bool operator==(const CriteriaReport&) const = default;
};

double cyclic_distance_deg(double a, double b);

// Shortest angular distance on the circle; scalar-generic so the optimizer
// can differentiate through phase criteria. fmod/fabs keep every step exact
// in IEEE arithmetic, so any faithful transcription reproduces it bit for bit.
template <class S>
S cyclic_distance_deg_t(S a, S b) {
    using std::fabs;
    using std::fmod;
    S d = fmod(fabs(a - b), S(360.0));
    if (value_of(d) > 180.0) d = S(360.0) - d;
    return d;
}

template <class S>
S metric_value_t(const Criterion& c, const ResponseValues<S>& r) {
    switch (c.metric) {
    case Metric::TotalReflection: return r.refl;
    case Metric::TotalTransmission: return r.trans;
    case Metric::ZeroOrderTransmissionPhaseDeg: return wrapped_phase_deg(r.t0);
    }
    throw CriteriaError(CriteriaError::Code::MetricUnavailable, "unhandled metric");
}

// Signed satisfaction: >= 0 iff the criterion is met.
template <class S>
S raw_margin_t(const Criterion& c, S value) {
    using std::fabs;
    switch (c.operation) {
    case CriterionOp::Ge: return value - S(c.target);
    case CriterionOp::Le: return S(c.target) - value;
    case CriterionOp::CloseTo:
        if (c.metric == Metric::ZeroOrderTransmissionPhaseDeg)
            return S(*c.tolerance) - cyclic_distance_deg_t(value, S(c.target));
        return S(*c.tolerance) - fabs(value - S(c.target)); // extension point, unused here
    }
    throw CriteriaError(CriteriaError::Code::MetricUnavailable, "unhandled operation");
}

double normalization_scale(const Criterion& c);
double raw_margin(const Criterion& c, const StackResponse& r);

CriteriaReport evaluate_task(const TaskSpec& task, const ResponseSet& responses);

} // namespace skillstack
