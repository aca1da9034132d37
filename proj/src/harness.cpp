#include "skillstack/harness.hpp"

#include <json.hpp>

#include <map>
#include <stdexcept>
#include <utility>
#include <variant>

#include "skillstack/llm.hpp"
#include "skillstack/physics.hpp"
#include "skillstack/rng.hpp"

namespace skillstack {

using ordered_json = nlohmann::ordered_json;

bool outranks(const CandidateRecord& a, const CandidateRecord& b) {
    if (a.report->cpf != b.report->cpf) return a.report->cpf > b.report->cpf;
    if (a.report->bm != b.report->bm) return a.report->bm > b.report->bm;
    return a.ordinal < b.ordinal;
}

ErrorCategory classify_failure(const std::exception& e) {
    // NonFiniteGradient derives from SolverError; check the subclass first.
    if (dynamic_cast<const NonFiniteGradient*>(&e)) return ErrorCategory::GradientError;
    if (dynamic_cast<const SolverError*>(&e)) return ErrorCategory::ApiMisuse;
    if (dynamic_cast<const CriteriaError*>(&e)) return ErrorCategory::ApiMisuse;
    if (dynamic_cast<const PlanParseError*>(&e)) return ErrorCategory::NoCodeNoSolution;
    if (dynamic_cast<const LlmTransportError*>(&e)) return ErrorCategory::Infrastructure;
    return ErrorCategory::Infrastructure;
}

bool excluded_from_composition(ErrorCategory category) {
    return category == ErrorCategory::Infrastructure;
}

namespace {

// Most frequent failure category; ties go to the one seen first.
ErrorCategory dominant_failure(const std::vector<CandidateRecord>& candidates) {
    std::map<ErrorCategory, int> counts;
    std::map<ErrorCategory, int> first_seen;
    for (const CandidateRecord& c : candidates) {
        if (c.report) continue;
        ++counts[c.outcome.category];
        first_seen.emplace(c.outcome.category, c.ordinal);
    }
    ErrorCategory pick = ErrorCategory::NoCodeNoSolution;
    int best_count = 0;
    int best_first = 0;
    for (const auto& [category, count] : counts) {
        const int first = first_seen.at(category);
        if (count > best_count || (count == best_count && first < best_first)) {
            pick = category;
            best_count = count;
            best_first = first;
        }
    }
    return pick;
}

} // namespace

TaskRecord codegen_eval(const TaskSpec& task, const SkillSet& skills, Generator& generator,
                        const HarnessConfig& config, std::uint64_t seed) {
    TaskRecord rec;
    rec.task_id = task.task_id;
    const long tokens_before = generator.tokens_used();
    const int R = config.outer_rounds;
    const int A = config.inner_attempts;

    std::optional<CandidateRecord> best;
    std::map<std::string, int> previous_round_errors;

    for (int r = 1; r <= R; ++r) {
        GeneratorSession session;
        session.session_id = task.task_id + "/" + std::to_string(seed);
        session.round_index = r;
        if (r > 1) {
            if (best) session.carried_best = CarriedBest{*best->plan, *best->report};
            session.carried_errors = previous_round_errors;
        }
        std::map<std::string, int> round_errors;
        std::optional<CandidateRecord> round_best;

        for (int a = 1; a <= A; ++a) {
            const int ordinal = (r - 1) * A + a;
            session.attempt_index = a;

            CandidateRecord cand;
            cand.ordinal = ordinal;
            cand.round = r;
            try {
                ProposeResult proposed = generator.propose(task, skills, session);
                if (auto* refusal = std::get_if<NoPlan>(&proposed)) {
                    cand.outcome.category = ErrorCategory::NoCodeNoSolution;
                    cand.outcome.message = refusal->reason;
                } else {
                    cand.plan = std::get<OptimizationPlan>(std::move(proposed));
                    if (auto invalid = validate_plan(*cand.plan, task)) {
                        cand.outcome.category = invalid->category;
                        cand.outcome.message = invalid->message;
                    } else {
                        cand.outcome = execute_plan(*cand.plan, task,
                                                    derive_seed(seed, "attempt", ordinal),
                                                    ExecuteLimits{config.solver_budget});
                        if (cand.outcome.evaluated)
                            cand.report = evaluate_task(task, cand.outcome.responses);
                    }
                }
            } catch (const std::exception& e) {
                cand.outcome = {};
                cand.outcome.category = classify_failure(e);
                cand.outcome.message = e.what();
                cand.report.reset();
            }
            rec.solver_calls += cand.outcome.solver_calls;
            rec.all_candidates.push_back(cand);

            FeedbackItem fb;
            fb.attempt = ordinal;
            if (cand.report) {
                if (!round_best || outranks(cand, *round_best)) round_best = cand;
                if (cand.report->sg == 1) {
                    rec.sg = 1.0;
                    rec.se = 1.0;
                    rec.cpf = cand.report->cpf;
                    rec.bm = cand.report->bm;
                    rec.attempts = ordinal;
                    rec.first_success_attempt = ordinal;
                    rec.best = cand;
                    rec.llm_tokens = generator.tokens_used() - tokens_before;
                    return rec;
                }
                fb.kind = FeedbackItem::Kind::Margins;
                fb.margins.reserve(cand.report->outcomes.size());
                for (const CriterionOutcome& o : cand.report->outcomes)
                    fb.margins.push_back(o.normalized_margin);
            } else {
                ++round_errors[std::string(error_category_name(cand.outcome.category))];
                fb.kind = FeedbackItem::Kind::ExecError;
                fb.category = cand.outcome.category;
                fb.message = cand.outcome.message;
            }
            session.feedback_log.push_back(std::move(fb));
        }

        if (round_best && (!best || outranks(*round_best, *best))) best = round_best;
        previous_round_errors = std::move(round_errors);
    }

    rec.attempts = R * A;
    if (best) {
        rec.se = 1.0;
        rec.cpf = best->report->cpf;
        rec.bm = best->report->bm;
        rec.best = best;
    } else {
        rec.error_category = dominant_failure(rec.all_candidates);
    }
    rec.llm_tokens = generator.tokens_used() - tokens_before;
    return rec;
}

namespace {

ordered_json responses_to_json(const ResponseSet& responses) {
    ordered_json flat = ordered_json::array();
    for (const StackResponse& r : responses.flat)
        flat.push_back({{"R", r.R},
                        {"T", r.T},
                        {"t0_re", r.t0.real()},
                        {"t0_im", r.t0.imag()}});
    return ordered_json{{"n_sources", responses.n_sources}, {"flat", std::move(flat)}};
}

ResponseSet responses_from_json(const ordered_json& doc) {
    ResponseSet responses;
    responses.n_sources = doc.at("n_sources").get<std::size_t>();
    for (const auto& r : doc.at("flat")) {
        StackResponse sr;
        sr.R = r.at("R").get<double>();
        sr.T = r.at("T").get<double>();
        sr.t0 = {r.at("t0_re").get<double>(), r.at("t0_im").get<double>()};
        responses.flat.push_back(sr);
    }
    return responses;
}

ordered_json report_to_json(const CriteriaReport& report) {
    ordered_json outcomes = ordered_json::array();
    for (const CriterionOutcome& o : report.outcomes)
        outcomes.push_back({{"raw_margin", o.raw_margin},
                            {"scale", o.scale},
                            {"normalized_margin", o.normalized_margin},
                            {"passed", o.passed}});
    return ordered_json{
        {"sg", report.sg}, {"cpf", report.cpf}, {"bm", report.bm}, {"outcomes", std::move(outcomes)}};
}

CriteriaReport report_from_json(const ordered_json& doc) {
    CriteriaReport report;
    report.sg = doc.at("sg").get<int>();
    report.cpf = doc.at("cpf").get<double>();
    report.bm = doc.at("bm").get<double>();
    for (const auto& o : doc.at("outcomes")) {
        CriterionOutcome out;
        out.raw_margin = o.at("raw_margin").get<double>();
        out.scale = o.at("scale").get<double>();
        out.normalized_margin = o.at("normalized_margin").get<double>();
        out.passed = o.at("passed").get<bool>();
        report.outcomes.push_back(out);
    }
    return report;
}

ordered_json candidate_to_json(const CandidateRecord& cand) {
    ordered_json j;
    j["ordinal"] = cand.ordinal;
    j["round"] = cand.round;
    j["plan"] = cand.plan ? ordered_json::parse(serialize_plan(*cand.plan)) : ordered_json(nullptr);
    ordered_json outcome;
    outcome["evaluated"] = cand.outcome.evaluated;
    outcome["category"] = std::string(error_category_name(cand.outcome.category));
    outcome["message"] = cand.outcome.message;
    outcome["final_params"] = cand.outcome.final_params;
    outcome["steps_used"] = cand.outcome.steps_used;
    outcome["solver_calls"] = cand.outcome.solver_calls;
    outcome["final_loss"] = cand.outcome.final_loss;
    outcome["responses"] = responses_to_json(cand.outcome.responses);
    j["outcome"] = std::move(outcome);
    j["report"] = cand.report ? report_to_json(*cand.report) : ordered_json(nullptr);
    return j;
}

CandidateRecord candidate_from_json(const ordered_json& doc) {
    CandidateRecord cand;
    cand.ordinal = doc.at("ordinal").get<int>();
    cand.round = doc.at("round").get<int>();
    if (!doc.at("plan").is_null()) cand.plan = parse_plan(doc.at("plan").dump());
    const auto& outcome = doc.at("outcome");
    cand.outcome.evaluated = outcome.at("evaluated").get<bool>();
    cand.outcome.category = error_category_from_name(outcome.at("category").get<std::string>());
    cand.outcome.message = outcome.at("message").get<std::string>();
    cand.outcome.final_params = outcome.at("final_params").get<std::vector<double>>();
    cand.outcome.steps_used = outcome.at("steps_used").get<int>();
    cand.outcome.solver_calls = outcome.at("solver_calls").get<long>();
    cand.outcome.final_loss = outcome.at("final_loss").get<double>();
    cand.outcome.responses = responses_from_json(outcome.at("responses"));
    if (!doc.at("report").is_null()) cand.report = report_from_json(doc.at("report"));
    return cand;
}

} // namespace

std::string serialize_task_record(const TaskRecord& record) {
    ordered_json j;
    j["task_id"] = record.task_id;
    j["sg"] = record.sg;
    j["se"] = record.se;
    j["cpf"] = record.cpf;
    j["bm"] = record.bm;
    j["attempts"] = record.attempts;
    j["first_success_attempt"] = record.first_success_attempt
                                     ? ordered_json(*record.first_success_attempt)
                                     : ordered_json(nullptr);
    j["error_category"] =
        record.error_category
            ? ordered_json(std::string(error_category_name(*record.error_category)))
            : ordered_json(nullptr);
    j["solver_calls"] = record.solver_calls;
    j["llm_tokens"] = record.llm_tokens;
    j["best_ordinal"] = record.best ? ordered_json(record.best->ordinal) : ordered_json(nullptr);
    ordered_json candidates = ordered_json::array();
    for (const CandidateRecord& cand : record.all_candidates)
        candidates.push_back(candidate_to_json(cand));
    j["candidates"] = std::move(candidates);
    return j.dump();
}

TaskRecord parse_task_record(std::string_view line) {
    const auto doc = ordered_json::parse(line);
    TaskRecord record;
    record.task_id = doc.at("task_id").get<std::string>();
    record.sg = doc.at("sg").get<double>();
    record.se = doc.at("se").get<double>();
    record.cpf = doc.at("cpf").get<double>();
    record.bm = doc.at("bm").get<double>();
    record.attempts = doc.at("attempts").get<int>();
    if (!doc.at("first_success_attempt").is_null())
        record.first_success_attempt = doc.at("first_success_attempt").get<int>();
    if (!doc.at("error_category").is_null())
        record.error_category =
            error_category_from_name(doc.at("error_category").get<std::string>());
    record.solver_calls = doc.at("solver_calls").get<long>();
    record.llm_tokens = doc.at("llm_tokens").get<long>();
    for (const auto& cand : doc.at("candidates"))
        record.all_candidates.push_back(candidate_from_json(cand));
    if (!doc.at("best_ordinal").is_null()) {
        const int wanted = doc.at("best_ordinal").get<int>();
        for (const CandidateRecord& cand : record.all_candidates)
            if (cand.ordinal == wanted) record.best = cand;
        if (!record.best) throw std::invalid_argument("best_ordinal points at no candidate");
    }
    return record;
}

} // namespace skillstack
