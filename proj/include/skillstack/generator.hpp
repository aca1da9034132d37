#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "skillstack/criteria.hpp"
#include "skillstack/plan.hpp"
#include "skillstack/skill.hpp"
#include "skillstack/task.hpp"

namespace skillstack {

// One piece of round-local feedback handed back to the generator: either an
// execution error or the per-criterion normalized margins of a scored plan.
struct FeedbackItem {
    enum class Kind { ExecError, Margins };
    Kind kind = Kind::Margins;
    int attempt = 0; // global attempt ordinal, (r-1)*A + a
    ErrorCategory category = ErrorCategory::NoCodeNoSolution; // ExecError only
    std::string message;                                      // ExecError only
    std::vector<double> margins;                              // Margins only

    bool operator==(const FeedbackItem&) const = default;
};

std::string serialize_feedback(const FeedbackItem& item);

// Best candidate carried across a session reset, with its score.
struct CarriedBest {
    OptimizationPlan plan;
    CriteriaReport report;

    bool operator==(const CarriedBest&) const = default;
};

// What a generator sees: round/attempt counters, the compact summary carried
// across the session reset (best-so-far plus the finished round's error
// histogram), and feedback accumulated in the current round only.
struct GeneratorSession {
    std::string session_id;
    int round_index = 1;
    int attempt_index = 1;
    std::optional<CarriedBest> carried_best;
    std::map<std::string, int> carried_errors; // category name -> count, previous round
    std::vector<FeedbackItem> feedback_log;
};

// Deliberate refusal to produce a plan; scored as NoCodeNoSolution.
struct NoPlan {
    std::string reason;
};

using ProposeResult = std::variant<OptimizationPlan, NoPlan>;

class Generator {
  public:
    virtual ~Generator() = default;
    virtual ProposeResult propose(const TaskSpec& task, const SkillSet& skills,
                                  const GeneratorSession& session) = 0;
    virtual std::string_view backend_name() const = 0;
    // cumulative completion tokens, when the backend is metered
    virtual long tokens_used() const { return 0; }
};

// Crafted misbehaviors, one per failure-taxonomy row.
enum class FaultProfile { None, AlwaysOmit, BadIndex, NanLoss, MisuseEta };

FaultProfile fault_profile_from_name(std::string_view name); // throws std::invalid_argument
std::string_view fault_profile_name(FaultProfile profile);

// Deterministic rule-following backend: applies the skill's per-family
// recipe, then revises it from carried results and round-local feedback.
class ScriptedGenerator : public Generator {
  public:
    explicit ScriptedGenerator(FaultProfile fault = FaultProfile::None) : fault_(fault) {}

    ProposeResult propose(const TaskSpec& task, const SkillSet& skills,
                          const GeneratorSession& session) override;
    std::string_view backend_name() const override { return "scripted"; }

  private:
    FaultProfile fault_;
};

} // namespace skillstack
