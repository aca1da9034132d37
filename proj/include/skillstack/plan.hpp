#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skillstack/criteria.hpp"
#include "skillstack/task.hpp"

namespace skillstack {

// Failure taxonomy shared by the plan runtime, generators, harness and
// reports. Infrastructure is bookkeeping-only: excluded from composition.
enum class ErrorCategory { TensorIndexOOB, ApiMisuse, GradientError, NoCodeNoSolution,
                           Infrastructure };

std::string_view error_category_name(ErrorCategory c);
ErrorCategory error_category_from_name(std::string_view name); // throws std::invalid_argument

struct LossTerm {
    int criterion_index = 0;
    std::string form = "hinge";
    double weight = 1.0;

    bool operator==(const LossTerm&) const = default;
};

// extra loss contributions beyond the per-criterion hinges; the only
// supported form, weight/(param - lower_bound), exists to let fault profiles
// manufacture genuine NaN/Inf losses
struct LossExtra {
    std::string form = "barrier_inverse";
    int param_index = 0;
    double weight = 1.0;

    bool operator==(const LossExtra&) const = default;
};

struct LossSpec {
    std::vector<LossTerm> terms;
    std::vector<LossExtra> extras;

    bool operator==(const LossSpec&) const = default;
};

enum class InitKind { Midpoint, RandomUniform, Explicit };

struct InitSpec {
    InitKind kind = InitKind::Midpoint;
    std::uint64_t seed = 0;          // used by random_uniform
    std::vector<double> values;      // used by explicit inits

    bool operator==(const InitSpec&) const = default;
};

struct OptimizerConfig {
    double learning_rate = 0.05;
    int steps = 100;
    int restarts = 0;
    double max_step = 0.1; // per-step cap in normalized coordinates

    bool operator==(const OptimizerConfig&) const = default;
};

struct OptimizationPlan {
    std::string strategy_note;
    InitSpec init;
    OptimizerConfig optimizer;
    LossSpec loss;
    bool projection = true;

    bool operator==(const OptimizationPlan&) const = default;
};

struct PlanError {
    ErrorCategory category;
    std::string message;
};

struct PlanParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExecutionOutcome {
    bool evaluated = false;
    ErrorCategory category = ErrorCategory::NoCodeNoSolution; // when !evaluated
    std::string message;
    std::vector<double> final_params;
    ResponseSet responses;
    int steps_used = 0;
    long solver_calls = 0;
    double final_loss = 0.0;

    bool operator==(const ExecutionOutcome&) const = default;
};

struct ExecuteLimits {
    long solver_budget = 10000; // response-set evaluations per attempt
};

// one hinge term per criterion, unit weights
LossSpec compile_loss(const TaskSpec& task);

std::optional<PlanError> validate_plan(const OptimizationPlan& plan, const TaskSpec& task);

// Projected gradient descent in box-normalized coordinates with restarts;
// deterministic in (plan, task, seed). Call only after validate_plan passes.
ExecutionOutcome execute_plan(const OptimizationPlan& plan, const TaskSpec& task,
                              std::uint64_t seed, const ExecuteLimits& limits = {});

std::string serialize_plan(const OptimizationPlan& plan);
OptimizationPlan parse_plan(std::string_view json_text);

} // namespace skillstack
