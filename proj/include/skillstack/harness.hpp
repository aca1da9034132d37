#pragma once

#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "skillstack/criteria.hpp"
#include "skillstack/generator.hpp"
#include "skillstack/plan.hpp"
#include "skillstack/skill.hpp"
#include "skillstack/task.hpp"

namespace skillstack {

struct HarnessConfig {
    int outer_rounds = 5;       // R
    int inner_attempts = 2;     // A
    long solver_budget = 10000; // response evaluations per attempt

    bool operator==(const HarnessConfig&) const = default;
};

// One attempt's full story: what was proposed (absent for NoPlan attempts),
// what happened when it ran, and its score when it reached evaluation.
struct CandidateRecord {
    std::optional<OptimizationPlan> plan;
    ExecutionOutcome outcome;
    std::optional<CriteriaReport> report; // present iff outcome.evaluated
    int ordinal = 0;                      // global attempt index, (r-1)*A + a
    int round = 0;

    bool operator==(const CandidateRecord&) const = default;
};

struct TaskRecord {
    std::string task_id;
    double sg = 0.0;
    double se = 0.0;
    double cpf = 0.0;
    double bm = 0.0; // from the best evaluated candidate; 0 when none exists
    int attempts = 0;
    std::optional<CandidateRecord> best;
    std::optional<ErrorCategory> error_category; // dominant failure when se = 0
    std::vector<CandidateRecord> all_candidates;
    std::optional<int> first_success_attempt;
    long solver_calls = 0; // summed across attempts
    long llm_tokens = 0;   // nonzero only under the LLM backend

    bool operator==(const TaskRecord&) const = default;
};

// true when a outranks b: higher CPF, then higher BM, then earlier ordinal
bool outranks(const CandidateRecord& a, const CandidateRecord& b);

// Exception-to-taxonomy mapping for failures that surface as C++ exceptions.
ErrorCategory classify_failure(const std::exception& e);

// Infrastructure failures are bookkeeping, not model behavior.
bool excluded_from_composition(ErrorCategory category);

// The two-level retry loop: R session-reset rounds of A feedback-coupled
// attempts each, early exit on SG=1, best-of-evaluated otherwise.
TaskRecord codegen_eval(const TaskSpec& task, const SkillSet& skills, Generator& generator,
                        const HarnessConfig& config, std::uint64_t seed);

// one JSON object per line
std::string serialize_task_record(const TaskRecord& record);
TaskRecord parse_task_record(std::string_view line);

} // namespace skillstack
