#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skillstack/plan.hpp"
#include "skillstack/task.hpp"

namespace skillstack {

// Per-family optimizer defaults a generator starts from.
struct FamilyRule {
    double learning_rate = 0.05;
    int steps = 8;
    int restarts = 0;
    InitKind init = InitKind::Midpoint;

    bool operator==(const FamilyRule&) const = default;
};

// Hard limits the repair directives saturate at. These caps are what make a
// skill strong or weak: repairs exist from the start, but a small step_cap or
// a high lr_floor keeps them from ever reaching a working configuration.
struct SkillGlobals {
    int step_cap = 32;
    double lr_floor = 0.01;
    int max_restarts = 2;
    double max_step = 0.1;

    bool operator==(const SkillGlobals&) const = default;
};

struct SkillRules {
    SkillGlobals globals;
    std::map<std::string, FamilyRule> families; // keyed by family name, e.g. "G1"
    std::map<std::string, std::string> repairs; // condition -> directive

    bool operator==(const SkillRules&) const = default;
};

struct SkillVersion {
    int iteration = 0;
    int sub_iteration = 0;

    bool operator==(const SkillVersion&) const = default;
};

struct SkillSet {
    std::string name = "learning-context";
    std::string description; // one-line front-matter summary
    SkillVersion version;
    std::string overview; // prose between the Skill Overview and Rules headings
    SkillRules rules;

    bool operator==(const SkillSet&) const = default;
};

struct SkillError : std::runtime_error {
    enum class Code { MissingFrontMatter, MissingOverview, MissingRules, BadRules };
    Code code;
    SkillError(Code c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

// Repair conditions a generator can look up.
inline constexpr std::string_view kRepairPhaseMiss = "phase_miss";
inline constexpr std::string_view kRepairAmplitudeMiss = "amplitude_miss";

// Directives a repair may name.
bool is_known_directive(std::string_view directive);

SkillSet parse_skill(std::string_view markdown);
std::string render_skill(const SkillSet& skill);

// Family lookup with fallback to the "default" entry, then to FamilyRule{}.
FamilyRule rule_for(const SkillRules& rules, Family family);

// The deliberately conservative seed skill every evolution run begins from.
SkillSet starter_skill();

// Static companion notes archived next to every skill snapshot.
const std::vector<std::pair<std::string, std::string>>& reference_files();

} // namespace skillstack
