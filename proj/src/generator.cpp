#include "skillstack/generator.hpp"

#include <json.hpp>

#include <algorithm>
#include <stdexcept>

#include "skillstack/rng.hpp"

namespace skillstack {

using ordered_json = nlohmann::ordered_json;

std::string serialize_feedback(const FeedbackItem& item) {
    ordered_json doc;
    if (item.kind == FeedbackItem::Kind::ExecError) {
        doc = ordered_json{{"kind", "exec_error"},
                           {"attempt", item.attempt},
                           {"category", std::string(error_category_name(item.category))},
                           {"message", item.message}};
    } else {
        doc = ordered_json{{"kind", "margins"},
                           {"attempt", item.attempt},
                           {"margins", item.margins}};
    }
    return doc.dump();
}

FaultProfile fault_profile_from_name(std::string_view name) {
    if (name == "none") return FaultProfile::None;
    if (name == "always-omit") return FaultProfile::AlwaysOmit;
    if (name == "bad-index") return FaultProfile::BadIndex;
    if (name == "nan-loss") return FaultProfile::NanLoss;
    if (name == "misuse-eta") return FaultProfile::MisuseEta;
    throw std::invalid_argument("unknown fault profile '" + std::string(name) + "'");
}

std::string_view fault_profile_name(FaultProfile profile) {
    switch (profile) {
    case FaultProfile::None: return "none";
    case FaultProfile::AlwaysOmit: return "always-omit";
    case FaultProfile::BadIndex: return "bad-index";
    case FaultProfile::NanLoss: return "nan-loss";
    case FaultProfile::MisuseEta: return "misuse-eta";
    }
    return "none";
}

ProposeResult ScriptedGenerator::propose(const TaskSpec& task, const SkillSet& skills,
                                         const GeneratorSession& session) {
    if (fault_ == FaultProfile::AlwaysOmit)
        return NoPlan{"fault profile always-omit refuses to emit a plan"};

    const FamilyRule rule = rule_for(skills.rules, task.family);
    const SkillGlobals& caps = skills.rules.globals;

    double lr = rule.learning_rate;
    int steps = rule.steps;
    int restarts = rule.restarts;
    InitKind init_kind = rule.init;
    std::uint64_t init_seed = derive_seed(fnv1a64(session.session_id), "init",
                                          static_cast<std::uint64_t>(session.round_index));

    const auto directive_for = [&](std::string_view condition) -> std::string {
        const auto it = skills.rules.repairs.find(std::string(condition));
        return it != skills.rules.repairs.end() ? it->second : std::string("retry");
    };
    const auto apply_directive = [&](std::string_view directive, int attempt) {
        if (directive == "double_steps") {
            steps = std::min(steps * 2, caps.step_cap);
        } else if (directive == "halve_lr") {
            lr = std::max(lr * 0.5, caps.lr_floor);
        } else if (directive == "halve_lr_reinit") {
            lr = std::max(lr * 0.5, caps.lr_floor);
            init_kind = InitKind::RandomUniform;
            init_seed = derive_seed(init_seed, "reinit", static_cast<std::uint64_t>(attempt));
        } else if (directive == "add_restart") {
            restarts = std::min(restarts + 1, caps.max_restarts);
        } else if (directive == "reset_optimizer") {
            lr = rule.learning_rate;
            steps = rule.steps;
            restarts = rule.restarts;
            init_kind = rule.init;
        }
        // "recompile_loss" and "retry" need no optimizer change: the loss is
        // compiled fresh for every proposal anyway
    };
    const auto apply_margins = [&](const std::vector<double>& margins, int attempt) {
        if (margins.empty()) return;
        const auto worst =
            static_cast<std::size_t>(std::min_element(margins.begin(), margins.end()) -
                                     margins.begin());
        if (margins[worst] >= 0.0) return; // nothing failed; keep the recipe
        steps = std::min(steps * 2, caps.step_cap);
        const bool phase_miss =
            worst < task.criteria.size() &&
            task.criteria[worst].metric == Metric::ZeroOrderTransmissionPhaseDeg;
        apply_directive(directive_for(phase_miss ? kRepairPhaseMiss : kRepairAmplitudeMiss),
                        attempt);
    };

    // a carried candidate re-seeds the configuration after a session reset;
    // its compact report drives one revision, compounding across rounds
    if (session.carried_best) {
        const auto& opt = session.carried_best->plan.optimizer;
        lr = opt.learning_rate;
        steps = opt.steps;
        restarts = opt.restarts;
        init_kind = session.carried_best->plan.init.kind;
        std::vector<double> margins;
        margins.reserve(session.carried_best->report.outcomes.size());
        for (const auto& outcome : session.carried_best->report.outcomes)
            margins.push_back(outcome.normalized_margin);
        apply_margins(margins, 0);
    }
    for (const FeedbackItem& item : session.feedback_log) {
        if (item.kind == FeedbackItem::Kind::ExecError)
            apply_directive(directive_for(error_category_name(item.category)), item.attempt);
        else
            apply_margins(item.margins, item.attempt);
    }

    steps = std::min(steps, caps.step_cap);
    lr = std::max(lr, caps.lr_floor);
    restarts = std::min(restarts, caps.max_restarts);

    OptimizationPlan plan;
    plan.strategy_note = "scripted " + std::string(family_name(task.family)) + " recipe, round " +
                         std::to_string(session.round_index) + " attempt " +
                         std::to_string(session.attempt_index);
    plan.init.kind = init_kind;
    if (init_kind == InitKind::RandomUniform) plan.init.seed = init_seed;
    plan.optimizer = {lr, steps, restarts, caps.max_step};
    plan.loss = compile_loss(task);
    plan.projection = true;

    switch (fault_) {
    case FaultProfile::BadIndex:
        // off-the-end criterion reference, the index-violation taxonomy row
        plan.loss.terms[0].criterion_index = static_cast<int>(task.criteria.size()) + 3;
        break;
    case FaultProfile::NanLoss: {
        // legal-looking barrier whose pole sits exactly on the init point
        plan.loss.extras.push_back({"barrier_inverse", 0, 1.0});
        plan.init.kind = InitKind::Explicit;
        plan.init.seed = 0;
        plan.init.values.clear();
        for (const auto& p : task.design_space.params) plan.init.values.push_back(p.lower_bound);
        break;
    }
    case FaultProfile::MisuseEta:
        plan.optimizer.learning_rate = 0.0;
        break;
    default:
        break;
    }
    return plan;
}

} // namespace skillstack
