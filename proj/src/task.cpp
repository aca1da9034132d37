#include "skillstack/task.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>

#include "skillstack/rng.hpp"

namespace skillstack {

using ordered_json = nlohmann::ordered_json;

std::string_view family_name(Family f) {
    switch (f) {
    case Family::G1: return "G1";
    case Family::G2: return "G2";
    case Family::G3: return "G3";
    case Family::G4: return "G4";
    case Family::G5: return "G5";
    case Family::G6: return "G6";
    case Family::Gaux: return "Gaux";
    }
    return "?";
}

Family family_from_name(std::string_view name) {
    for (Family f : {Family::G1, Family::G2, Family::G3, Family::G4, Family::G5, Family::G6,
                     Family::Gaux}) {
        if (family_name(f) == name) return f;
    }
    throw TaskParseError(TaskError::BadValue, "unknown family: " + std::string(name));
}

std::string_view polarization_name(Polarization p) { return p == Polarization::TE ? "TE" : "TM"; }

std::string_view metric_name(Metric m) {
    switch (m) {
    case Metric::TotalReflection: return "total_reflection";
    case Metric::TotalTransmission: return "total_transmission";
    case Metric::ZeroOrderTransmissionPhaseDeg: return "zero_order_transmission_phase_deg";
    }
    return "?";
}

std::string_view operation_name(CriterionOp op) {
    switch (op) {
    case CriterionOp::Ge: return ">=";
    case CriterionOp::Le: return "<=";
    case CriterionOp::CloseTo: return "close_to";
    }
    return "?";
}

std::vector<Source> sources_of(const PhysicalContext& ctx) {
    std::vector<Source> out;
    out.reserve(ctx.incidence_angles_deg.size() * ctx.polarizations.size());
    for (double angle : ctx.incidence_angles_deg)
        for (Polarization pol : ctx.polarizations) out.push_back({angle, pol});
    return out;
}

namespace {

[[noreturn]] void fail(TaskError code, const std::string& what) {
    throw TaskParseError(code, what);
}

void check_fields(const ordered_json& obj, std::initializer_list<std::string_view> allowed,
                  const char* where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (auto a : allowed)
            if (it.key() == a) known = true;
        if (!known) fail(TaskError::UnknownField, std::string("unknown field '") + it.key() +
                                                      "' in " + where);
    }
}

ordered_json cx_json(std::complex<double> z) {
    return ordered_json{{"n", z.real()}, {"k", z.imag()}};
}

std::complex<double> cx_from(const ordered_json& obj, const char* where) {
    if (!obj.is_object()) fail(TaskError::MalformedJson, std::string(where) + ": expected {n,k}");
    check_fields(obj, {"n", "k"}, where);
    if (!obj.contains("n")) fail(TaskError::MalformedJson, std::string(where) + ": missing n");
    const double n = obj.at("n").get<double>();
    const double k = obj.contains("k") ? obj.at("k").get<double>() : 0.0;
    if (k < 0.0) fail(TaskError::BadValue, std::string(where) + ": Im(index) must be >= 0");
    return {n, k};
}

Metric metric_from_name(const std::string& name) {
    for (Metric m : {Metric::TotalReflection, Metric::TotalTransmission,
                     Metric::ZeroOrderTransmissionPhaseDeg}) {
        if (metric_name(m) == name) return m;
    }
    fail(TaskError::UnknownMetric, "unknown metric: " + name);
}

CriterionOp operation_from_name(const std::string& name) {
    for (CriterionOp op : {CriterionOp::Ge, CriterionOp::Le, CriterionOp::CloseTo}) {
        if (operation_name(op) == name) return op;
    }
    fail(TaskError::BadValue, "unknown operation: " + name);
}

Polarization polarization_from_name(const std::string& name) {
    if (name == "TE") return Polarization::TE;
    if (name == "TM") return Polarization::TM;
    fail(TaskError::BadValue, "unknown polarization: " + name);
}

Criterion parse_criterion(const ordered_json& obj, std::size_t n_wavelengths) {
    check_fields(obj, {"metric", "params", "operation", "target", "tolerance"}, "criterion");
    Criterion c;
    c.metric = metric_from_name(obj.at("metric").get<std::string>());
    const auto& params = obj.at("params");
    check_fields(params, {"wavelength_index", "source_index", "component"}, "criterion params");
    c.wavelength_index = params.at("wavelength_index").get<int>();
    if (c.wavelength_index < 0 || static_cast<std::size_t>(c.wavelength_index) >= n_wavelengths)
        fail(TaskError::BadWavelengthIndex,
             "wavelength_index " + std::to_string(c.wavelength_index) + " out of range");
    if (params.contains("source_index")) {
        c.source_index = params.at("source_index").get<int>();
        if (c.source_index < 0) fail(TaskError::BadValue, "source_index must be >= 0");
    }
    if (params.contains("component")) {
        c.component = params.at("component").get<std::string>();
        if (c.component != "x" && c.component != "y")
            fail(TaskError::BadValue, "component must be x or y");
    }
    c.operation = operation_from_name(obj.at("operation").get<std::string>());
    c.target = obj.at("target").get<double>();
    if (obj.contains("tolerance")) {
        if (c.operation != CriterionOp::CloseTo)
            fail(TaskError::BadValue, "tolerance only valid with close_to");
        c.tolerance = obj.at("tolerance").get<double>();
    }
    if (c.operation == CriterionOp::CloseTo) {
        if (!c.tolerance) fail(TaskError::MissingTolerance, "close_to requires tolerance");
        if (*c.tolerance <= 0.0) fail(TaskError::BadValue, "tolerance must be positive");
        if (c.metric == Metric::ZeroOrderTransmissionPhaseDeg) {
            if (c.target < 0.0 || c.target >= 360.0)
                fail(TaskError::BadValue, "phase target must lie in [0, 360)");
            if (*c.tolerance > 180.0) fail(TaskError::BadValue, "phase tolerance must be <= 180");
        }
    }
    return c;
}

ordered_json criterion_json(const Criterion& c) {
    ordered_json params;
    params["wavelength_index"] = c.wavelength_index;
    params["source_index"] = c.source_index;
    if (!c.component.empty()) params["component"] = c.component;
    ordered_json out;
    out["metric"] = std::string(metric_name(c.metric));
    out["params"] = params;
    out["operation"] = std::string(operation_name(c.operation));
    out["target"] = c.target;
    if (c.tolerance) out["tolerance"] = *c.tolerance;
    return out;
}

PhysicalContext parse_context(const ordered_json& obj) {
    check_fields(obj,
                 {"incidence_angles_deg", "polarizations", "superstrate_index", "substrate_index",
                  "fixed_layer_indices"},
                 "physical_context");
    PhysicalContext ctx;
    ctx.incidence_angles_deg = obj.at("incidence_angles_deg").get<std::vector<double>>();
    ctx.polarizations.clear();
    for (const auto& p : obj.at("polarizations"))
        ctx.polarizations.push_back(polarization_from_name(p.get<std::string>()));
    ctx.superstrate_index = cx_from(obj.at("superstrate_index"), "superstrate_index");
    ctx.substrate_index = cx_from(obj.at("substrate_index"), "substrate_index");
    ctx.fixed_layer_indices.clear();
    for (const auto& z : obj.at("fixed_layer_indices"))
        ctx.fixed_layer_indices.push_back(cx_from(z, "fixed_layer_indices"));
    return ctx;
}

DesignSpace parse_design_space(const ordered_json& obj) {
    check_fields(obj, {"params"}, "design_space");
    DesignSpace ds;
    for (const auto& p : obj.at("params")) {
        check_fields(p, {"name", "lower_bound", "upper_bound", "unit"}, "design param");
        DesignParam dp;
        dp.name = p.at("name").get<std::string>();
        dp.lower_bound = p.at("lower_bound").get<double>();
        dp.upper_bound = p.at("upper_bound").get<double>();
        dp.unit = p.at("unit").get<std::string>();
        ds.params.push_back(std::move(dp));
    }
    return ds;
}

// Shape classification for task files that carry no explicit family tag.
Family infer_family(const std::vector<Criterion>& cs, const std::string& query) {
    const bool plasmonic =
        query.find("plasmonic") != std::string::npos || query.find("metallic") != std::string::npos;
    if (cs.size() == 1 && cs[0].metric == Metric::TotalReflection &&
        cs[0].operation == CriterionOp::Ge)
        return plasmonic ? Family::G5 : Family::G1;
    if (cs.size() == 2 && cs[0].metric == Metric::TotalReflection &&
        cs[1].metric == Metric::TotalReflection) {
        if (cs[0].operation == CriterionOp::Ge && cs[1].operation == CriterionOp::Le)
            return Family::G3;
        if (cs[0].operation == CriterionOp::Ge && cs[1].operation == CriterionOp::Ge) {
            if (cs[0].wavelength_index != cs[1].wavelength_index) return Family::G4;
            return Family::G2;
        }
    }
    if (cs.size() == 2 && cs[0].metric == Metric::TotalTransmission &&
        cs[0].operation == CriterionOp::Ge &&
        cs[1].metric == Metric::ZeroOrderTransmissionPhaseDeg &&
        cs[1].operation == CriterionOp::CloseTo)
        return cs[1].component == "y" ? Family::Gaux : Family::G6;
    fail(TaskError::BadValue, "criteria shape matches no known family");
}

// Canonical stand-in context for bare task files, keyed on the inferred family.
void apply_default_context(TaskSpec& t) {
    PhysicalContext& ctx = t.physical_context;
    DesignSpace& ds = t.design_space;
    switch (t.family) {
    case Family::G1:
    case Family::G4:
        ctx.substrate_index = {1.363, 0.0};
        ctx.fixed_layer_indices = {{2.436, 0.0}};
        ds.params = {{"thickness_0", 0.01, 0.35, "um"}};
        break;
    case Family::G2:
        ctx.incidence_angles_deg = {0.0, 5.0};
        ctx.substrate_index = {1.363, 0.0};
        ctx.fixed_layer_indices = {{2.436, 0.0}};
        ds.params = {{"thickness_0", 0.01, 0.35, "um"}};
        break;
    case Family::G3:
        ctx.incidence_angles_deg = {60.0};
        ctx.polarizations = {Polarization::TE, Polarization::TM};
        ctx.substrate_index = {1.363, 0.0};
        ctx.fixed_layer_indices = {{2.436, 0.0}};
        ds.params = {{"thickness_0", 0.01, 0.35, "um"}};
        break;
    case Family::G5:
        ctx.substrate_index = {1.363, 0.0};
        ctx.fixed_layer_indices = {{1.3523, 7.9137}};
        ds.params = {{"thickness_0", 0.01, 0.35, "um"}};
        break;
    case Family::G6:
    case Family::Gaux: {
        // transmission side: light enters from the dense medium and exits to air
        ctx.superstrate_index = {1.457, 0.0};
        ctx.substrate_index = {1.0, 0.0};
        ctx.fixed_layer_indices = {{4.527, 0.0}, {5.212, 0.010}};
        const std::string& comp = t.criteria[1].component;
        ctx.polarizations = {comp == "y" ? Polarization::TE : Polarization::TM};
        ds.params = {{"thickness_0", 0.05, 0.60, "um"}, {"thickness_1", 0.05, 0.60, "um"}};
        break;
    }
    }
}

void validate_task(const TaskSpec& t) {
    if (t.criteria.empty()) fail(TaskError::BadValue, "criteria list is empty");
    if (t.physical_context.wavelengths_um.empty())
        fail(TaskError::BadValue, "wavelength_um is empty");
    for (double w : t.physical_context.wavelengths_um)
        if (!(w > 0.0)) fail(TaskError::BadValue, "wavelengths must be positive");
    for (double a : t.physical_context.incidence_angles_deg)
        if (a < 0.0 || a >= 90.0) fail(TaskError::BadValue, "angles must lie in [0, 90)");
    if (t.physical_context.polarizations.empty())
        fail(TaskError::BadValue, "polarizations list is empty");
    auto passive = [](std::complex<double> z) { return z.imag() >= 0.0; };
    if (!passive(t.physical_context.superstrate_index) ||
        !passive(t.physical_context.substrate_index))
        fail(TaskError::BadValue, "Im(index) must be >= 0");
    for (auto z : t.physical_context.fixed_layer_indices)
        if (!passive(z)) fail(TaskError::BadValue, "Im(index) must be >= 0");
    if (t.design_space.params.empty()) fail(TaskError::BadValue, "design space is empty");
    std::vector<bool> has_thickness(t.physical_context.fixed_layer_indices.size(), false);
    for (const auto& p : t.design_space.params) {
        if (!(p.lower_bound < p.upper_bound))
            fail(TaskError::BadValue, "design param '" + p.name + "': lower must be < upper");
        const auto [is_thickness, layer] = parse_param_name(p.name);
        if (static_cast<std::size_t>(layer) >= has_thickness.size())
            fail(TaskError::BadValue, "design param '" + p.name + "' addresses no layer");
        if (is_thickness) {
            if (p.lower_bound < 0.0)
                fail(TaskError::BadValue, "thickness lower bound must be >= 0");
            has_thickness[layer] = true;
        }
    }
    for (std::size_t i = 0; i < has_thickness.size(); ++i)
        if (!has_thickness[i])
            fail(TaskError::BadValue, "layer " + std::to_string(i) + " has no thickness param");
    const std::size_t n_sources = sources_of(t.physical_context).size();
    const std::size_t n_wl = t.physical_context.wavelengths_um.size();
    for (const auto& c : t.criteria) {
        if (static_cast<std::size_t>(c.wavelength_index) >= n_wl)
            fail(TaskError::BadWavelengthIndex, "criterion wavelength_index out of range");
        if (static_cast<std::size_t>(c.source_index) >= n_sources)
            fail(TaskError::BadValue, "criterion source_index out of range");
    }
}

} // namespace

std::pair<bool, int> parse_param_name(std::string_view name) {
    bool thickness = false;
    std::string_view rest;
    if (name.starts_with("thickness_")) {
        thickness = true;
        rest = name.substr(10);
    } else if (name.starts_with("index_")) {
        rest = name.substr(6);
    } else {
        fail(TaskError::BadValue, "design parameter name '" + std::string(name) +
                                      "' is not thickness_<j> or index_<j>");
    }
    if (rest.empty()) fail(TaskError::BadValue, "design parameter name missing layer ordinal");
    int layer = 0;
    for (char ch : rest) {
        if (ch < '0' || ch > '9')
            fail(TaskError::BadValue, "design parameter layer ordinal must be an integer");
        layer = layer * 10 + (ch - '0');
    }
    return {thickness, layer};
}

TaskSpec parse_task(std::string_view json_text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        fail(TaskError::MalformedJson, e.what());
    }
    try {
        if (!doc.is_object()) fail(TaskError::MalformedJson, "task must be a JSON object");
        check_fields(doc,
                     {"task_id", "family", "query", "gt_eval", "physical_context", "design_space",
                      "reference"},
                     "task");
        TaskSpec t;
        t.query = doc.at("query").get<std::string>();
        t.reference = doc.at("reference").get<std::string>();
        const auto& gt = doc.at("gt_eval");
        check_fields(gt, {"wavelength_um", "criteria"}, "gt_eval");
        t.physical_context.wavelengths_um = gt.at("wavelength_um").get<std::vector<double>>();
        if (t.physical_context.wavelengths_um.empty())
            fail(TaskError::BadValue, "wavelength_um is empty");
        for (const auto& c : gt.at("criteria"))
            t.criteria.push_back(parse_criterion(c, t.physical_context.wavelengths_um.size()));
        if (t.criteria.empty()) fail(TaskError::BadValue, "criteria list is empty");

        const bool extended = doc.contains("physical_context");
        if (doc.contains("family"))
            t.family = family_from_name(doc.at("family").get<std::string>());
        else
            t.family = infer_family(t.criteria, t.query);
        if (extended) {
            const auto wl = t.physical_context.wavelengths_um;
            t.physical_context = parse_context(doc.at("physical_context"));
            t.physical_context.wavelengths_um = wl;
            if (!doc.contains("design_space"))
                fail(TaskError::MalformedJson, "physical_context without design_space");
            t.design_space = parse_design_space(doc.at("design_space"));
        } else {
            if (doc.contains("design_space"))
                fail(TaskError::MalformedJson, "design_space without physical_context");
            apply_default_context(t);
        }
        if (doc.contains("task_id")) {
            t.task_id = doc.at("task_id").get<std::string>();
        } else {
            // stable content hash so identical bare files map to one identity
            ordered_json bare{{"query", t.query}, {"gt_eval", gt}, {"reference", t.reference}};
            char buf[17];
            std::snprintf(buf, sizeof buf, "%016llx",
                          static_cast<unsigned long long>(fnv1a64(bare.dump())));
            t.task_id = std::string("t") + buf;
        }
        validate_task(t);
        return t;
    } catch (const TaskParseError&) {
        throw;
    } catch (const nlohmann::json::exception& e) {
        fail(TaskError::MalformedJson, e.what());
    }
}

namespace {

ordered_json task_json(const TaskSpec& t) {
    ordered_json gt;
    gt["wavelength_um"] = t.physical_context.wavelengths_um;
    gt["criteria"] = ordered_json::array();
    for (const auto& c : t.criteria) gt["criteria"].push_back(criterion_json(c));

    ordered_json ctx;
    ctx["incidence_angles_deg"] = t.physical_context.incidence_angles_deg;
    ctx["polarizations"] = ordered_json::array();
    for (auto p : t.physical_context.polarizations)
        ctx["polarizations"].push_back(std::string(polarization_name(p)));
    ctx["superstrate_index"] = cx_json(t.physical_context.superstrate_index);
    ctx["substrate_index"] = cx_json(t.physical_context.substrate_index);
    ctx["fixed_layer_indices"] = ordered_json::array();
    for (auto z : t.physical_context.fixed_layer_indices)
        ctx["fixed_layer_indices"].push_back(cx_json(z));

    ordered_json ds;
    ds["params"] = ordered_json::array();
    for (const auto& p : t.design_space.params)
        ds["params"].push_back(ordered_json{{"name", p.name},
                                            {"lower_bound", p.lower_bound},
                                            {"upper_bound", p.upper_bound},
                                            {"unit", p.unit}});

    ordered_json out;
    out["task_id"] = t.task_id;
    out["family"] = std::string(family_name(t.family));
    out["query"] = t.query;
    out["gt_eval"] = gt;
    out["physical_context"] = ctx;
    out["design_space"] = ds;
    out["reference"] = t.reference;
    return out;
}

} // namespace

std::string serialize_task(const TaskSpec& task) { return task_json(task).dump(2); }

std::string serialize_splits(const SplitSet& splits) {
    ordered_json out;
    out["setting"] = splits.setting;
    out["seed"] = splits.seed;
    auto ids = [](const std::vector<TaskSpec>& v) {
        ordered_json a = ordered_json::array();
        for (const auto& t : v) a.push_back(t.task_id);
        return a;
    };
    out["train"] = ids(splits.train);
    out["validation"] = ids(splits.validation);
    out["test"] = ids(splits.test);
    ordered_json tasks = ordered_json::array();
    for (const auto* split : {&splits.train, &splits.validation, &splits.test})
        for (const auto& t : *split) tasks.push_back(task_json(t));
    out["tasks"] = tasks;
    return out.dump(2);
}

SplitSet parse_splits(std::string_view json_text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        fail(TaskError::MalformedJson, e.what());
    }
    try {
        check_fields(doc, {"setting", "seed", "train", "validation", "test", "tasks"},
                     "split manifest");
        SplitSet s;
        s.setting = doc.at("setting").get<std::string>();
        s.seed = doc.at("seed").get<std::uint64_t>();
        std::vector<TaskSpec> tasks;
        for (const auto& t : doc.at("tasks")) tasks.push_back(parse_task(t.dump()));
        auto lookup = [&](const std::string& id) -> const TaskSpec& {
            for (const auto& t : tasks)
                if (t.task_id == id) return t;
            fail(TaskError::BadValue, "split references unknown task_id " + id);
        };
        for (const auto& id : doc.at("train")) s.train.push_back(lookup(id.get<std::string>()));
        for (const auto& id : doc.at("validation"))
            s.validation.push_back(lookup(id.get<std::string>()));
        for (const auto& id : doc.at("test")) s.test.push_back(lookup(id.get<std::string>()));
        return s;
    } catch (const TaskParseError&) {
        throw;
    } catch (const nlohmann::json::exception& e) {
        fail(TaskError::MalformedJson, e.what());
    }
}

} // namespace skillstack
