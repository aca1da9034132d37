#include "skillstack/plan.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include "skillstack/dual.hpp"
#include "skillstack/physics.hpp"
#include "skillstack/rng.hpp"

namespace skillstack {

using ordered_json = nlohmann::ordered_json;

std::string_view error_category_name(ErrorCategory c) {
    switch (c) {
    case ErrorCategory::TensorIndexOOB: return "TensorIndexOOB";
    case ErrorCategory::ApiMisuse: return "ApiMisuse";
    case ErrorCategory::GradientError: return "GradientError";
    case ErrorCategory::NoCodeNoSolution: return "NoCodeNoSolution";
    case ErrorCategory::Infrastructure: return "Infrastructure";
    }
    return "Infrastructure";
}

ErrorCategory error_category_from_name(std::string_view name) {
    for (ErrorCategory c : {ErrorCategory::TensorIndexOOB, ErrorCategory::ApiMisuse,
                            ErrorCategory::GradientError, ErrorCategory::NoCodeNoSolution,
                            ErrorCategory::Infrastructure})
        if (name == error_category_name(c)) return c;
    throw std::invalid_argument("unknown error category: " + std::string(name));
}

LossSpec compile_loss(const TaskSpec& task) {
    LossSpec spec;
    spec.terms.reserve(task.criteria.size());
    for (std::size_t j = 0; j < task.criteria.size(); ++j)
        spec.terms.push_back({static_cast<int>(j), "hinge", 1.0});
    return spec;
}

namespace {

template <class S>
S hinge(S x) {
    return value_of(x) > 0.0 ? x : S(0.0);
}

// Scalar-generic loss: full response set for the current parameter vector,
// then one hinge per term plus any barrier extras. One call = one charge
// against the solver budget.
template <class S>
S loss_value(const TaskSpec& task, const LossSpec& loss, const std::vector<Source>& sources,
             const std::vector<S>& params) {
    const auto& ctx = task.physical_context;
    const StackT<S> st = assemble_stack_t(ctx, task.design_space, params);
    std::vector<ResponseValues<S>> responses;
    responses.reserve(ctx.wavelengths_um.size() * sources.size());
    for (double wl : ctx.wavelengths_um)
        for (const Source& src : sources)
            responses.push_back(solve_stack_t(st, S(wl), src.angle_deg, src.pol));

    S total(0.0);
    for (const LossTerm& term : loss.terms) {
        const Criterion& c = task.criteria[static_cast<std::size_t>(term.criterion_index)];
        const ResponseValues<S>& r =
            responses[c.wavelength_index * sources.size() + c.source_index];
        const S normalized = raw_margin_t(c, metric_value_t(c, r)) / S(normalization_scale(c));
        total = total + S(term.weight) * hinge(S(0.0) - normalized);
    }
    for (const LossExtra& extra : loss.extras) {
        const auto idx = static_cast<std::size_t>(extra.param_index);
        total = total + S(extra.weight) /
                            (params[idx] - S(task.design_space.params[idx].lower_bound));
    }
    return total;
}

struct BudgetExhausted {};

const char* init_kind_name(InitKind k) {
    switch (k) {
    case InitKind::Midpoint: return "midpoint";
    case InitKind::RandomUniform: return "random_uniform";
    case InitKind::Explicit: return "explicit";
    }
    return "midpoint";
}

} // namespace

std::optional<PlanError> validate_plan(const OptimizationPlan& plan, const TaskSpec& task) {
    const auto& opt = plan.optimizer;
    if (!(opt.learning_rate > 0.0))
        return PlanError{ErrorCategory::ApiMisuse, "learning rate must be positive"};
    if (opt.steps < 1) return PlanError{ErrorCategory::ApiMisuse, "step count must be at least 1"};
    if (opt.restarts < 0)
        return PlanError{ErrorCategory::ApiMisuse, "restart count cannot be negative"};
    if (!(opt.max_step > 0.0))
        return PlanError{ErrorCategory::ApiMisuse, "max_step must be positive"};

    const int n_criteria = static_cast<int>(task.criteria.size());
    if (plan.loss.terms.empty())
        return PlanError{ErrorCategory::ApiMisuse, "loss has no terms"};
    std::vector<int> coverage(task.criteria.size(), 0);
    for (const LossTerm& term : plan.loss.terms) {
        if (term.criterion_index < 0 || term.criterion_index >= n_criteria)
            return PlanError{ErrorCategory::TensorIndexOOB,
                             "loss term references criterion " +
                                 std::to_string(term.criterion_index) + " but the task has " +
                                 std::to_string(n_criteria) + " criteria"};
        if (term.form != "hinge")
            return PlanError{ErrorCategory::ApiMisuse,
                             "unsupported loss form '" + term.form + "'"};
        if (!(term.weight > 0.0))
            return PlanError{ErrorCategory::ApiMisuse, "loss term weight must be positive"};
        ++coverage[static_cast<std::size_t>(term.criterion_index)];
    }
    for (std::size_t j = 0; j < coverage.size(); ++j)
        if (coverage[j] != 1)
            return PlanError{ErrorCategory::ApiMisuse,
                             "loss must cover every criterion exactly once (criterion " +
                                 std::to_string(j) + " appears " + std::to_string(coverage[j]) +
                                 " times)"};

    const int n_params = static_cast<int>(task.design_space.params.size());
    for (const LossExtra& extra : plan.loss.extras) {
        if (extra.form != "barrier_inverse")
            return PlanError{ErrorCategory::ApiMisuse,
                             "unsupported loss extra form '" + extra.form + "'"};
        if (extra.param_index < 0 || extra.param_index >= n_params)
            return PlanError{ErrorCategory::TensorIndexOOB,
                             "loss extra references parameter " +
                                 std::to_string(extra.param_index) + " but the design space has " +
                                 std::to_string(n_params) + " parameters"};
        if (!(extra.weight > 0.0))
            return PlanError{ErrorCategory::ApiMisuse, "loss extra weight must be positive"};
    }

    if (plan.init.kind == InitKind::Explicit) {
        if (plan.init.values.size() != task.design_space.params.size())
            return PlanError{ErrorCategory::ApiMisuse,
                             "explicit init has " + std::to_string(plan.init.values.size()) +
                                 " values for " + std::to_string(n_params) + " parameters"};
        for (std::size_t i = 0; i < plan.init.values.size(); ++i) {
            const auto& p = task.design_space.params[i];
            const double v = plan.init.values[i];
            if (!(v >= p.lower_bound && v <= p.upper_bound))
                return PlanError{ErrorCategory::ApiMisuse,
                                 "explicit init leaves the design space at '" + p.name + "'"};
        }
    }
    return std::nullopt;
}

ExecutionOutcome execute_plan(const OptimizationPlan& plan, const TaskSpec& task,
                              std::uint64_t seed, const ExecuteLimits& limits) {
    const auto& ds = task.design_space;
    const std::size_t n = ds.params.size();
    std::vector<double> lo(n), range(n);
    for (std::size_t i = 0; i < n; ++i) {
        lo[i] = ds.params[i].lower_bound;
        range[i] = ds.params[i].upper_bound - ds.params[i].lower_bound;
    }
    const auto sources = sources_of(task.physical_context);

    ExecutionOutcome out;
    auto charge = [&] {
        if (out.solver_calls >= limits.solver_budget) throw BudgetExhausted{};
        ++out.solver_calls;
    };
    auto to_params = [&](const std::vector<double>& z) {
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = lo[i] + z[i] * range[i];
        return x;
    };
    // value and d/dz via one forward-mode pass per coordinate
    auto loss_and_grad = [&](const std::vector<double>& z, double& value,
                             std::vector<double>& grad) {
        std::vector<Dual> x(n);
        for (std::size_t p = 0; p < n; ++p) {
            charge();
            for (std::size_t i = 0; i < n; ++i)
                x[i] = Dual{lo[i] + z[i] * range[i], i == p ? range[i] : 0.0};
            const Dual L = loss_value(task, plan.loss, sources, x);
            value = L.v;
            grad[p] = L.d;
        }
    };

    auto initial_point = [&](int trajectory) {
        std::vector<double> z(n);
        if (trajectory == 0) {
            switch (plan.init.kind) {
            case InitKind::Midpoint:
                std::fill(z.begin(), z.end(), 0.5);
                break;
            case InitKind::RandomUniform: {
                Rng rng(derive_seed(plan.init.seed, "init", 0));
                for (auto& zi : z) zi = rng.uniform();
                break;
            }
            case InitKind::Explicit:
                for (std::size_t i = 0; i < n; ++i)
                    z[i] = range[i] > 0.0 ? (plan.init.values[i] - lo[i]) / range[i] : 0.0;
                break;
            }
        } else {
            Rng rng(derive_seed(seed, "restart", static_cast<std::uint64_t>(trajectory)));
            for (auto& zi : z) zi = rng.uniform();
        }
        return z;
    };

    const int trajectories = plan.optimizer.restarts + 1;
    bool have_best = false;
    std::vector<double> best_z;
    double best_loss = std::numeric_limits<double>::infinity();
    std::optional<PlanError> first_abort;
    auto abort_with = [&](ErrorCategory cat, const std::string& msg) {
        if (!first_abort) first_abort = PlanError{cat, msg};
    };

    try {
        std::vector<double> grad(n);
        for (int k = 0; k < trajectories; ++k) {
            std::vector<double> z = initial_point(k);
            double current = std::numeric_limits<double>::quiet_NaN();
            bool aborted = false;
            for (int step = 0; step < plan.optimizer.steps; ++step) {
                loss_and_grad(z, current, grad);
                bool finite = std::isfinite(current);
                for (double g : grad) finite = finite && std::isfinite(g);
                if (!finite) {
                    abort_with(ErrorCategory::GradientError,
                               "loss or gradient became non-finite during descent");
                    aborted = true;
                    break;
                }
                ++out.steps_used;
                if (current == 0.0) break; // every hinge slack; the iterate is a fixed point
                for (std::size_t i = 0; i < n; ++i) {
                    const double dz = std::clamp(plan.optimizer.learning_rate * grad[i],
                                                 -plan.optimizer.max_step,
                                                 plan.optimizer.max_step);
                    z[i] -= dz;
                    if (plan.projection) z[i] = std::clamp(z[i], 0.0, 1.0);
                }
            }
            if (aborted) continue;
            charge();
            const double final_loss = loss_value(task, plan.loss, sources, to_params(z));
            if (!std::isfinite(final_loss)) {
                abort_with(ErrorCategory::GradientError, "final loss is non-finite");
                continue;
            }
            if (!have_best || final_loss < best_loss) {
                have_best = true;
                best_loss = final_loss;
                best_z = z;
            }
        }
    } catch (const BudgetExhausted&) {
        out.evaluated = false;
        out.category = ErrorCategory::Infrastructure;
        out.message = "solver budget of " + std::to_string(limits.solver_budget) +
                      " response evaluations exhausted";
        return out;
    } catch (const SolverError& e) {
        out.evaluated = false;
        out.category = ErrorCategory::GradientError;
        out.message = e.what();
        return out;
    }

    if (!have_best) {
        out.evaluated = false;
        if (first_abort) {
            out.category = first_abort->category;
            out.message = first_abort->message;
        } else {
            out.category = ErrorCategory::GradientError;
            out.message = "no trajectory produced a finite loss";
        }
        return out;
    }

    out.evaluated = true;
    out.final_params = to_params(best_z);
    out.responses = solve_all(task.physical_context, ds, out.final_params);
    out.final_loss = best_loss;
    return out;
}

std::string serialize_plan(const OptimizationPlan& plan) {
    ordered_json init{{"kind", init_kind_name(plan.init.kind)}};
    if (plan.init.kind == InitKind::RandomUniform) init["seed"] = plan.init.seed;
    if (plan.init.kind == InitKind::Explicit) init["values"] = plan.init.values;

    ordered_json terms = ordered_json::array();
    for (const LossTerm& t : plan.loss.terms)
        terms.push_back(ordered_json{{"criterion_index", t.criterion_index},
                                     {"form", t.form},
                                     {"weight", t.weight}});

    ordered_json doc{{"strategy_note", plan.strategy_note},
                     {"init", std::move(init)},
                     {"optimizer", ordered_json{{"learning_rate", plan.optimizer.learning_rate},
                                                {"steps", plan.optimizer.steps},
                                                {"restarts", plan.optimizer.restarts},
                                                {"max_step", plan.optimizer.max_step}}},
                     {"loss_terms", std::move(terms)}};
    if (!plan.loss.extras.empty()) {
        ordered_json extras = ordered_json::array();
        for (const LossExtra& e : plan.loss.extras)
            extras.push_back(ordered_json{{"form", e.form},
                                          {"param_index", e.param_index},
                                          {"weight", e.weight}});
        doc["loss_extras"] = std::move(extras);
    }
    doc["projection"] = plan.projection;
    return doc.dump(2);
}

namespace {

void expect_fields(const ordered_json& obj, std::initializer_list<std::string_view> allowed,
                   const char* where) {
    if (!obj.is_object()) throw PlanParseError(std::string(where) + " must be an object");
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw PlanParseError("unknown field '" + key + "' in " + where);
    }
}

double number_at(const ordered_json& obj, const char* key, const char* where) {
    if (!obj.contains(key))
        throw PlanParseError(std::string(where) + " is missing '" + key + "'");
    const auto& v = obj.at(key);
    if (!v.is_number()) throw PlanParseError(std::string(where) + "." + key + " must be a number");
    return v.get<double>();
}

int int_at(const ordered_json& obj, const char* key, const char* where, int fallback,
           bool required) {
    if (!obj.contains(key)) {
        if (required) throw PlanParseError(std::string(where) + " is missing '" + key + "'");
        return fallback;
    }
    const auto& v = obj.at(key);
    if (!v.is_number_integer())
        throw PlanParseError(std::string(where) + "." + key + " must be an integer");
    return v.get<int>();
}

} // namespace

OptimizationPlan parse_plan(std::string_view json_text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw PlanParseError(std::string("malformed plan JSON: ") + e.what());
    }
    expect_fields(doc,
                  {"strategy_note", "init", "optimizer", "loss_terms", "loss_extras",
                   "projection"},
                  "plan");

    OptimizationPlan plan;
    if (doc.contains("strategy_note")) {
        if (!doc["strategy_note"].is_string())
            throw PlanParseError("plan.strategy_note must be a string");
        plan.strategy_note = doc["strategy_note"].get<std::string>();
    }

    if (!doc.contains("init")) throw PlanParseError("plan is missing 'init'");
    const auto& init = doc["init"];
    expect_fields(init, {"kind", "seed", "values"}, "plan.init");
    if (!init.contains("kind") || !init["kind"].is_string())
        throw PlanParseError("plan.init.kind must be a string");
    const std::string kind = init["kind"].get<std::string>();
    if (kind == "midpoint") {
        plan.init.kind = InitKind::Midpoint;
    } else if (kind == "random_uniform") {
        plan.init.kind = InitKind::RandomUniform;
    } else if (kind == "explicit") {
        plan.init.kind = InitKind::Explicit;
    } else {
        throw PlanParseError("unknown init kind '" + kind + "'");
    }
    if (init.contains("seed")) {
        if (!init["seed"].is_number_unsigned() && !init["seed"].is_number_integer())
            throw PlanParseError("plan.init.seed must be an integer");
        plan.init.seed = init["seed"].get<std::uint64_t>();
    }
    if (plan.init.kind == InitKind::Explicit) {
        if (!init.contains("values") || !init["values"].is_array())
            throw PlanParseError("explicit init needs a 'values' array");
        for (const auto& v : init["values"]) {
            if (!v.is_number()) throw PlanParseError("plan.init.values must hold numbers");
            plan.init.values.push_back(v.get<double>());
        }
    } else if (init.contains("values")) {
        throw PlanParseError("init kind '" + kind + "' does not take values");
    }

    if (!doc.contains("optimizer")) throw PlanParseError("plan is missing 'optimizer'");
    const auto& opt = doc["optimizer"];
    expect_fields(opt, {"learning_rate", "steps", "restarts", "max_step"}, "plan.optimizer");
    plan.optimizer.learning_rate = number_at(opt, "learning_rate", "plan.optimizer");
    plan.optimizer.steps = int_at(opt, "steps", "plan.optimizer", 0, true);
    plan.optimizer.restarts = int_at(opt, "restarts", "plan.optimizer", 0, false);
    plan.optimizer.max_step =
        opt.contains("max_step") ? number_at(opt, "max_step", "plan.optimizer") : 0.1;

    if (!doc.contains("loss_terms") || !doc["loss_terms"].is_array())
        throw PlanParseError("plan is missing a 'loss_terms' array");
    for (const auto& t : doc["loss_terms"]) {
        expect_fields(t, {"criterion_index", "form", "weight"}, "loss term");
        LossTerm term;
        term.criterion_index = int_at(t, "criterion_index", "loss term", 0, true);
        if (t.contains("form")) {
            if (!t["form"].is_string()) throw PlanParseError("loss term form must be a string");
            term.form = t["form"].get<std::string>();
        }
        if (t.contains("weight")) term.weight = number_at(t, "weight", "loss term");
        plan.loss.terms.push_back(std::move(term));
    }
    if (doc.contains("loss_extras")) {
        if (!doc["loss_extras"].is_array())
            throw PlanParseError("plan.loss_extras must be an array");
        for (const auto& e : doc["loss_extras"]) {
            expect_fields(e, {"form", "param_index", "weight"}, "loss extra");
            LossExtra extra;
            if (e.contains("form")) {
                if (!e["form"].is_string())
                    throw PlanParseError("loss extra form must be a string");
                extra.form = e["form"].get<std::string>();
            }
            extra.param_index = int_at(e, "param_index", "loss extra", 0, true);
            if (e.contains("weight")) extra.weight = number_at(e, "weight", "loss extra");
            plan.loss.extras.push_back(std::move(extra));
        }
    }
    if (doc.contains("projection")) {
        if (!doc["projection"].is_boolean())
            throw PlanParseError("plan.projection must be a boolean");
        plan.projection = doc["projection"].get<bool>();
    }
    return plan;
}

} // namespace skillstack
