#include "skillstack/skill.hpp"

#include <json.hpp>

#include <array>
#include <cstdio>

namespace skillstack {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 7> kDirectives = {
    "double_steps", "halve_lr", "halve_lr_reinit", "add_restart",
    "recompile_loss", "reset_optimizer", "retry"};

constexpr std::array<std::string_view, 7> kRepairConditions = {
    "TensorIndexOOB", "ApiMisuse", "GradientError", "NoCodeNoSolution", "Infrastructure",
    kRepairPhaseMiss, kRepairAmplitudeMiss};

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\n' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\n' || s[e - 1] == '\t' || s[e - 1] == '\r'))
        --e;
    return std::string(s.substr(b, e - b));
}

[[noreturn]] void bad_rules(const std::string& msg) {
    throw SkillError(SkillError::Code::BadRules, msg);
}

InitKind init_from_name(const std::string& name) {
    if (name == "midpoint") return InitKind::Midpoint;
    if (name == "random_uniform") return InitKind::RandomUniform;
    bad_rules("unknown init kind '" + name + "' in a family rule");
}

const char* init_name(InitKind k) {
    return k == InitKind::RandomUniform ? "random_uniform" : "midpoint";
}

void expect_keys(const ordered_json& obj, std::initializer_list<std::string_view> allowed,
                 const char* where) {
    if (!obj.is_object()) bad_rules(std::string(where) + " must be an object");
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) bad_rules("unknown field '" + key + "' in " + where);
    }
}

SkillRules parse_rules(std::string_view text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        bad_rules(std::string("rule block is not valid JSON: ") + e.what());
    }
    expect_keys(doc, {"globals", "families", "repairs"}, "skill rules");
    if (!doc.contains("globals") || !doc.contains("families") || !doc.contains("repairs"))
        bad_rules("skill rules need globals, families and repairs");

    SkillRules rules;
    const auto& g = doc["globals"];
    expect_keys(g, {"step_cap", "lr_floor", "max_restarts", "max_step"}, "globals");
    for (auto key : {"step_cap", "lr_floor", "max_restarts", "max_step"})
        if (!g.contains(key)) bad_rules(std::string("globals is missing '") + key + "'");
    rules.globals.step_cap = g["step_cap"].get<int>();
    rules.globals.lr_floor = g["lr_floor"].get<double>();
    rules.globals.max_restarts = g["max_restarts"].get<int>();
    rules.globals.max_step = g["max_step"].get<double>();
    if (rules.globals.step_cap < 1) bad_rules("step_cap must be at least 1");
    if (!(rules.globals.lr_floor > 0.0)) bad_rules("lr_floor must be positive");
    if (rules.globals.max_restarts < 0) bad_rules("max_restarts cannot be negative");
    if (!(rules.globals.max_step > 0.0)) bad_rules("max_step must be positive");

    if (!doc["families"].is_object()) bad_rules("families must be an object");
    for (const auto& [fam, entry] : doc["families"].items()) {
        expect_keys(entry, {"learning_rate", "steps", "restarts", "init"},
                    ("family rule '" + fam + "'").c_str());
        FamilyRule rule;
        rule.learning_rate = entry.at("learning_rate").get<double>();
        rule.steps = entry.at("steps").get<int>();
        rule.restarts = entry.at("restarts").get<int>();
        rule.init = init_from_name(entry.at("init").get<std::string>());
        if (!(rule.learning_rate > 0.0)) bad_rules("family learning rate must be positive");
        if (rule.steps < 1) bad_rules("family steps must be at least 1");
        if (rule.restarts < 0) bad_rules("family restarts cannot be negative");
        rules.families[fam] = rule;
    }

    if (!doc["repairs"].is_object()) bad_rules("repairs must be an object");
    for (const auto& [condition, directive] : doc["repairs"].items()) {
        bool known_condition = false;
        for (auto c : kRepairConditions) known_condition = known_condition || condition == c;
        if (!known_condition) bad_rules("unknown repair condition '" + condition + "'");
        if (!directive.is_string() || !is_known_directive(directive.get<std::string>()))
            bad_rules("unknown repair directive for '" + condition + "'");
        rules.repairs[condition] = directive.get<std::string>();
    }
    return rules;
}

std::string render_rules(const SkillRules& rules) {
    ordered_json g{{"step_cap", rules.globals.step_cap},
                   {"lr_floor", rules.globals.lr_floor},
                   {"max_restarts", rules.globals.max_restarts},
                   {"max_step", rules.globals.max_step}};
    ordered_json fams = ordered_json::object();
    for (const auto& [name, rule] : rules.families)
        fams[name] = ordered_json{{"learning_rate", rule.learning_rate},
                                  {"steps", rule.steps},
                                  {"restarts", rule.restarts},
                                  {"init", init_name(rule.init)}};
    ordered_json reps = ordered_json::object();
    for (const auto& [condition, directive] : rules.repairs) reps[condition] = directive;
    return ordered_json{{"globals", std::move(g)},
                        {"families", std::move(fams)},
                        {"repairs", std::move(reps)}}
        .dump(2);
}

} // namespace

bool is_known_directive(std::string_view directive) {
    for (auto d : kDirectives)
        if (directive == d) return true;
    return false;
}

SkillSet parse_skill(std::string_view markdown) {
    const std::string text(markdown);
    if (text.rfind("---\n", 0) != 0)
        throw SkillError(SkillError::Code::MissingFrontMatter,
                         "skill markdown must open with a --- front-matter block");
    const auto fm_end = text.find("\n---\n", 3);
    if (fm_end == std::string::npos)
        throw SkillError(SkillError::Code::MissingFrontMatter, "unterminated front matter");

    SkillSet skill;
    skill.name.clear();
    bool have_version = false;
    std::size_t pos = 4;
    while (pos <= fm_end) {
        auto eol = text.find('\n', pos);
        const std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.rfind("name:", 0) == 0) skill.name = trim(line.substr(5));
        if (line.rfind("description:", 0) == 0) skill.description = trim(line.substr(12));
        if (line.rfind("version:", 0) == 0) {
            int it = 0, sub = 0;
            if (std::sscanf(trim(line.substr(8)).c_str(), "%d.%d", &it, &sub) != 2)
                throw SkillError(SkillError::Code::MissingFrontMatter,
                                 "version must look like <iteration>.<sub_iteration>");
            skill.version = {it, sub};
            have_version = true;
        }
    }
    if (skill.name.empty() || !have_version)
        throw SkillError(SkillError::Code::MissingFrontMatter,
                         "front matter needs both name and version");

    const std::string body = text.substr(fm_end + 5);
    const auto overview_head = body.find("## Skill Overview");
    if (overview_head == std::string::npos)
        throw SkillError(SkillError::Code::MissingOverview, "no '## Skill Overview' section");
    const auto overview_start = body.find('\n', overview_head);
    const auto rules_head = body.find("\n## Rules", overview_head);
    if (rules_head == std::string::npos)
        throw SkillError(SkillError::Code::MissingRules, "no '## Rules' section");
    skill.overview = trim(body.substr(overview_start + 1, rules_head - overview_start - 1));

    const std::string fence = "```skill-rules\n";
    const auto fence_start = body.find(fence, rules_head);
    if (fence_start == std::string::npos)
        throw SkillError(SkillError::Code::MissingRules, "no skill-rules code fence");
    const auto json_start = fence_start + fence.size();
    const auto fence_end = body.find("\n```", json_start);
    if (fence_end == std::string::npos)
        throw SkillError(SkillError::Code::MissingRules, "unterminated skill-rules fence");
    skill.rules = parse_rules(body.substr(json_start, fence_end - json_start));
    return skill;
}

std::string render_skill(const SkillSet& skill) {
    if (skill.overview.find("\n## ") != std::string::npos)
        throw SkillError(SkillError::Code::BadRules,
                         "overview prose cannot contain second-level headings");
    std::string out;
    out += "---\n";
    out += "name: " + skill.name + "\n";
    if (!skill.description.empty()) out += "description: " + skill.description + "\n";
    out += "version: " + std::to_string(skill.version.iteration) + "." +
           std::to_string(skill.version.sub_iteration) + "\n";
    out += "---\n\n";
    out += "## Skill Overview\n\n";
    out += trim(skill.overview);
    out += "\n\n## Rules\n\n";
    out += "```skill-rules\n";
    out += render_rules(skill.rules);
    out += "\n```\n";
    return out;
}

FamilyRule rule_for(const SkillRules& rules, Family family) {
    if (auto it = rules.families.find(std::string(family_name(family)));
        it != rules.families.end())
        return it->second;
    if (auto it = rules.families.find("default"); it != rules.families.end()) return it->second;
    return FamilyRule{};
}

SkillSet starter_skill() {
    SkillSet skill;
    skill.name = "learning-context";
    skill.description =
        "Optimizer recipes and repair directives for layered-stack design tasks";
    skill.version = {0, 0};
    skill.overview =
        "Design each stack by gradient descent on a hinge loss with one term per\n"
        "criterion. Start from the midpoint of the design box, take a handful of\n"
        "short steps, and report the best point found. When an attempt fails, the\n"
        "repair playbook below nudges the optimizer: double the step budget for\n"
        "amplitude misses, halve the learning rate for phase misses, and restart\n"
        "from fresh points after runtime errors. Keep budgets small; most stacks\n"
        "are assumed to converge quickly.";
    FamilyRule uniform{0.05, 8, 0, InitKind::Midpoint};
    for (auto fam :
         {Family::G1, Family::G2, Family::G3, Family::G4, Family::G5, Family::G6, Family::Gaux})
        skill.rules.families[std::string(family_name(fam))] = uniform;
    skill.rules.globals = {32, 0.01, 2, 0.1};
    skill.rules.repairs = {
        {"GradientError", "halve_lr_reinit"},
        {"TensorIndexOOB", "recompile_loss"},
        {"ApiMisuse", "reset_optimizer"},
        {"NoCodeNoSolution", "retry"},
        {std::string(kRepairPhaseMiss), "halve_lr"},
        {std::string(kRepairAmplitudeMiss), "double_steps"},
    };
    return skill;
}

const std::vector<std::pair<std::string, std::string>>& reference_files() {
    static const std::vector<std::pair<std::string, std::string>> files = {
        {"setup.md",
         "# Setup\n\n"
         "Lengths are micrometres, angles are degrees, and the optimizer works in\n"
         "box-normalized coordinates: every design parameter is mapped onto [0, 1]\n"
         "before any step is taken, so learning rates and step caps are comparable\n"
         "across tasks regardless of physical units. A plan is a JSON document with\n"
         "an init block, an optimizer block and a loss term list; the runtime\n"
         "rejects anything it cannot execute before spending solver budget.\n"},
        {"materials_and_layers.md",
         "# Materials and layers\n\n"
         "Refractive indices are complex, n + ik with k >= 0; a positive k makes a\n"
         "layer absorbing. The bounding media come from the task context: the\n"
         "superstrate must be lossless (incident power is undefined otherwise) while\n"
         "the substrate may absorb. Fixed layer indices come from the context too;\n"
         "design parameters only override the real part of a layer's index or set\n"
         "its thickness. Every layer needs exactly one thickness parameter.\n"},
        {"patterning.md",
         "# Patterning\n\n"
         "Design parameters address layers by suffix: thickness_0 sets layer 0's\n"
         "thickness, index_1 replaces the real index of layer 1. Layers are listed\n"
         "superstrate first. There is no lateral patterning in this stack model, so\n"
         "a design is completely described by the parameter vector, and the\n"
         "parameter order in the design space is the order the optimizer sees.\n"},
        {"sources_and_solving.md",
         "# Sources and solving\n\n"
         "A task's source list is the cross product of its incidence angles and\n"
         "polarizations, angle-major: with angles [a, b] and polarizations [TE, TM]\n"
         "the sources are (a, TE), (a, TM), (b, TE), (b, TM). Response sets store\n"
         "one entry per (wavelength, source) pair, wavelength-major. Criteria pick\n"
         "their operand with wavelength_index and source_index into that layout.\n"},
        {"phase_and_orders.md",
         "# Phase\n\n"
         "Transmission phase is reported wrapped into [0, 360) degrees and compared\n"
         "cyclically: the distance between 350 and 10 is 20, never 340. Phase\n"
         "accumulates at roughly 360 n / lambda degrees per micrometre of thickness,\n"
         "which for high-index layers means thousands of degrees per micrometre.\n"
         "Tight phase tolerances therefore carve very narrow feasible windows, and\n"
         "step sizes that work for amplitude targets hop clean over them.\n"},
        {"amplitude_and_efficiency.md",
         "# Amplitude and efficiency\n\n"
         "R is reflected power and T transmitted power, both normalized to the\n"
         "incident beam; for lossless stacks R + T = 1 to solver precision, with\n"
         "absorption the remainder is dissipated in the layers. Reflection targets\n"
         "near a stack's fringe ceiling leave only thin slivers of feasible\n"
         "thickness, so expect to need restarts rather than longer descents there.\n"},
        {"optimization.md",
         "# Optimization\n\n"
         "The loss is a sum of hinges, one per criterion: each term is the negated\n"
         "normalized margin clamped at zero, so the loss is exactly zero when every\n"
         "criterion is met and gradients vanish term by term as criteria become\n"
         "satisfied. Descent is plain projected gradient with a per-step cap in\n"
         "normalized coordinates; restarts draw fresh uniform starting points and\n"
         "the best final loss wins. Budget is counted in response evaluations, one\n"
         "per gradient pass per parameter, so wide design spaces cost more per step.\n"},
        {"pitfalls.md",
         "# Pitfalls\n\n"
         "The recurring failure shapes, in rough order of frequency: a learning rate\n"
         "so large that every step clips at max_step and the iterate oscillates\n"
         "across a narrow feasible window without landing; step budgets too small to\n"
         "travel from the midpoint to the nearest basin; inverse-barrier terms with\n"
         "an init pinned at the pole, which poisons the loss with infinities on the\n"
         "first evaluation; loss terms that index criteria the task does not have;\n"
         "and unprojected runs that wander out of the box until thicknesses go\n"
         "negative. All but the first are cheap to detect from the error category.\n"},
        {"context_usage.md",
         "# Using the rule table\n\n"
         "Generators read the family entry from the rule table for initial optimizer\n"
         "settings, then apply repair directives in response to feedback: an error\n"
         "category looks up its repair directly, a reported margin shortfall maps to\n"
         "phase_miss or amplitude_miss depending on the worst criterion's metric.\n"
         "Directives saturate at the globals block's caps, so the caps bound how far\n"
         "any repair chain can reach. Never exceed the caps; raise them only by\n"
         "revising the skill itself.\n"},
    };
    return files;
}

} // namespace skillstack
