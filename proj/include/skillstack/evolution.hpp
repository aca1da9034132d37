#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "skillstack/harness.hpp"
#include "skillstack/llm.hpp"
#include "skillstack/metrics.hpp"
#include "skillstack/skill.hpp"
#include "skillstack/task.hpp"

namespace skillstack {

struct EvolutionError : std::runtime_error {
    enum class Code { EmptyPool, UpdaterFailure, IoFailure };
    Code code;
    EvolutionError(Code c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

// A pool entry: the skill plus its full validation-split scorecard.
struct ValidatedSkill {
    SkillSet skill;
    DatasetMetrics validation;
    std::vector<TaskRecord> validation_records;
};

// Pool and cursor for the outer loop; the pool is kept in creation order so
// selection ties resolve toward the earlier candidate.
struct EvolutionState {
    SkillSet current;
    std::vector<ValidatedSkill> pool;
    int iteration = 0;
    std::filesystem::path archive_root;
};

// Each worker gets its own generator, so backends with internal state (token
// meters, HTTP sessions) never share across threads.
using GeneratorFactory = std::function<std::unique_ptr<Generator>()>;

// Skill updater: reads a training batch's rollout evidence and proposes
// revised skills. batch and rollouts are parallel arrays.
using Updater = std::function<std::vector<SkillSet>(
    const SkillSet& current, const std::vector<TaskSpec>& batch,
    const std::vector<TaskRecord>& rollouts, int iteration)>;

// Default updater: evidence-gated recipe adjustment. Families whose rollouts
// failed move along a fixed ladder of increasingly careful optimizer recipes
// (smaller steps, bigger budgets, more restarts); a worst margin on a phase
// criterion advances further than an amplitude miss, execution-error
// categories count via their repair semantics, and Infrastructure noise is
// ignored. Emits a conservative and an aggressive variant; with no evidence
// it returns the current skill unchanged.
std::vector<SkillSet> rule_based_update(const SkillSet& current,
                                        const std::vector<TaskSpec>& batch,
                                        const std::vector<TaskRecord>& rollouts, int iteration);

// LLM-backed updater: posts the current skill markdown plus a digest of the
// batch evidence to a chat endpoint and parses the reply as a revised
// SKILL.md (fenced block or bare document). Wire trouble or an unparseable
// reply throws, which the iteration loop records as an updater failure and
// survives by keeping the current skill.
Updater make_llm_updater(const LlmConfig& config);

// Runs every task under the skill; per-task harness seed is
// derive_seed(seed, tag, index), so results are independent of jobs.
std::vector<TaskRecord> evaluate_split(const std::vector<TaskSpec>& tasks, const SkillSet& skill,
                                       const GeneratorFactory& make_generator,
                                       const HarnessConfig& config, std::uint64_t seed,
                                       std::string_view tag, int jobs = 1);

struct IterationOutcome {
    std::vector<TaskSpec> batch;
    std::vector<TaskRecord> rollouts;
    std::vector<SkillSet> candidates; // version-stamped {iteration, 1..}
    bool updater_failed = false;      // current skill retained when set
    std::string updater_error;
};

// One training pass: seeded batch sample, rollouts under the current skill,
// updater proposals. Validation of the proposals is the caller's job.
IterationOutcome run_iteration(const EvolutionState& state, const std::vector<TaskSpec>& train,
                               int batch_size, const HarnessConfig& config,
                               const GeneratorFactory& make_generator, const Updater& updater,
                               std::uint64_t seed, int jobs = 1);

// argmax validation SG; ties to higher CPF, then higher BM, then lower mean
// attempts, then earlier creation. Throws EmptyPool on an empty pool.
const ValidatedSkill& select_skill(const std::vector<ValidatedSkill>& pool);

// Writes the skill snapshot plus per-round mount packages:
//   <root>/meta_agent/skills/learning-context-iterN/SKILL.md
//   <root>/iterN_subM/codegen/iter_K/.agents/skills/learning-context/SKILL.md
//   <root>/iterN_subM/codegen/iter_K/.agents/skills/learning-context/reference/*.md
// K walks 1..rounds (one mount per retry round); M is the skill's
// sub-iteration. Idempotent: re-archiving rewrites identical bytes.
std::vector<std::filesystem::path> archive_skill(const std::filesystem::path& root,
                                                 const SkillSet& skill, int iteration,
                                                 int rounds = 5);

// Hash of solver + criteria behavior on fixed probe inputs. Recorded before
// and after a run to demonstrate the evaluator never moved.
std::string evaluator_fingerprint();

struct EvolveConfig {
    int iterations = 4;
    int batch_size = 20;
    HarnessConfig harness;
    std::uint64_t seed = 0;
    int jobs = 1;

    bool operator==(const EvolveConfig&) const = default;
};

struct EvolveResult {
    SkillSet selected;
    std::string selected_id; // "iterN_subM"
    DatasetMetrics baseline_test;
    DatasetMetrics post_test;
    std::filesystem::path manifest_path;
};

// The full loop: starter validation, baseline test pass, `iterations`
// train/update/validate/select/archive cycles, post test pass. Writes into
// out_dir: splits.json, logs/*.jsonl, archive/, report/ and
// evolution_manifest.json. Pure function of (splits, generator behavior,
// config) — reruns emit identical bytes.
EvolveResult evolve(const std::filesystem::path& out_dir, const SplitSet& splits,
                    const GeneratorFactory& make_generator, const Updater& updater,
                    const EvolveConfig& config);

} // namespace skillstack
