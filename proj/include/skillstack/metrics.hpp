#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "skillstack/harness.hpp"

namespace skillstack {

struct MetricsError : std::runtime_error {
    enum class Code { EmptyInput, IdMismatch, InconsistentRecord };
    Code code;
    MetricsError(Code c, const std::string& what) : std::runtime_error(what), code(c) {}
};

struct DatasetMetrics {
    double se = 0.0;
    double sg = 0.0;
    double cpf = 0.0;
    double bm = 0.0; // mean over tasks that produced an evaluated candidate
    double attempts_mean = 0.0;
    int n = 0;
    int bm_excluded = 0; // execution-failure tasks left out of the bm mean

    bool operator==(const DatasetMetrics&) const = default;
};

// Arithmetic means of the per-task indicators. Throws EmptyInput on an empty
// set and InconsistentRecord when any record claims bm > 0 without sg = 1.
DatasetMetrics aggregate(const std::vector<TaskRecord>& records);

// Fraction of tasks whose first success landed within the first K attempts.
// Monotone nondecreasing in K; at K = R*A it equals the success rate.
double pass_at_k(const std::vector<TaskRecord>& records, int K);

struct TransitionCounts {
    int pass_pass = 0;
    int pass_fail = 0;
    int fail_pass = 0;
    int fail_fail = 0;

    bool operator==(const TransitionCounts&) const = default;
};

// Task-level sg changes between two evaluations of the same task set,
// joined on task_id. Throws IdMismatch when the id sets differ.
TransitionCounts transitions(const std::vector<TaskRecord>& baseline,
                             const std::vector<TaskRecord>& post);

// Per-round failure makeup: round -> category name -> fraction. Infrastructure
// failures are dropped from the denominators; rounds without countable errors
// are omitted entirely.
std::map<int, std::map<std::string, double>>
error_composition(const std::vector<TaskRecord>& records);

} // namespace skillstack
