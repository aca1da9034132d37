#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "skillstack/evolution.hpp"
#include "skillstack/rng.hpp"

using namespace skillstack;
namespace fs = std::filesystem;

namespace {

ValidatedSkill pool_entry(double sg, double cpf = 0.5, double bm = 0.0,
                          double attempts = 5.0) {
    ValidatedSkill entry;
    entry.validation.sg = sg;
    entry.validation.cpf = cpf;
    entry.validation.bm = bm;
    entry.validation.attempts_mean = attempts;
    return entry;
}

// Synthetic rollout whose best candidate's worst margin sits on criterion
// `worst_index` of the paired task, so gather-evidence reads a specific
// phase/amplitude signal.
TaskRecord margin_failure(const TaskSpec& task, std::size_t worst_index) {
    TaskRecord rec;
    rec.task_id = task.task_id;
    rec.se = 1.0;
    rec.attempts = 10;
    CandidateRecord best;
    best.ordinal = 1;
    best.outcome.evaluated = true;
    CriteriaReport report;
    for (std::size_t i = 0; i < task.criteria.size(); ++i) {
        CriterionOutcome out;
        out.normalized_margin = i == worst_index ? -0.8 : 0.2;
        out.passed = i != worst_index;
        report.outcomes.push_back(out);
    }
    report.cpf = 0.5;
    report.bm = -0.8;
    best.report = report;
    rec.best = best;
    rec.bm = -0.8;
    return rec;
}

TaskRecord healthy_pass(const TaskSpec& task) {
    TaskRecord rec;
    rec.task_id = task.task_id;
    rec.sg = 1.0;
    rec.se = 1.0;
    rec.cpf = 1.0;
    rec.bm = 0.4; // comfortably inside tolerance
    rec.attempts = 1;
    rec.first_success_attempt = 1;
    return rec;
}

TaskRecord infra_failure(const TaskSpec& task) {
    TaskRecord rec;
    rec.task_id = task.task_id;
    rec.se = 0.0;
    rec.attempts = 10;
    rec.error_category = ErrorCategory::Infrastructure;
    return rec;
}

TaskSpec family_task(Family family, std::uint64_t index) {
    Rng rng(derive_seed(4100, "evofix", index));
    return generate_family_instance(family, rng, 0);
}

FamilyRule effective_rule(const SkillSet& skill, const std::string& family) {
    return skill.rules.families.count(family) ? skill.rules.families.at(family)
                                              : rule_for(skill.rules, family_from_name(family));
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// All regular files under root as relative-path -> contents.
std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            files[fs::relative(entry.path(), root).generic_string()] = slurp(entry.path());
    return files;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    return dir;
}

} // namespace

TEST_CASE("selection is argmax validation SG") {
    std::vector<ValidatedSkill> pool;
    pool.push_back(pool_entry(0.80));
    pool.push_back(pool_entry(1.00));
    pool.push_back(pool_entry(0.93));
    CHECK(&select_skill(pool) == &pool[1]);
    for (const ValidatedSkill& entry : pool)
        CHECK(select_skill(pool).validation.sg >= entry.validation.sg);
}

TEST_CASE("selection ties break toward CPF, BM, then fewer attempts") {
    std::vector<ValidatedSkill> pool;
    pool.push_back(pool_entry(1.0, 0.95));
    pool.push_back(pool_entry(1.0, 0.99));
    CHECK(&select_skill(pool) == &pool[1]);

    pool[0].validation.cpf = 0.99;
    pool[0].validation.bm = 0.10;
    pool[1].validation.bm = 0.05;
    CHECK(&select_skill(pool) == &pool[0]);

    pool[1].validation.bm = 0.10;
    pool[0].validation.attempts_mean = 4.0;
    pool[1].validation.attempts_mean = 2.0;
    CHECK(&select_skill(pool) == &pool[1]);

    pool[0].validation.attempts_mean = 2.0; // full tie: earlier entry wins
    CHECK(&select_skill(pool) == &pool[0]);
}

TEST_CASE("selection on a single entry and an empty pool") {
    std::vector<ValidatedSkill> pool{pool_entry(0.2)};
    CHECK(&select_skill(pool) == &pool[0]);
    pool.clear();
    CHECK_THROWS_AS(select_skill(pool), EvolutionError);
    try {
        select_skill(pool);
    } catch (const EvolutionError& e) {
        CHECK(e.code == EvolutionError::Code::EmptyPool);
    }
}

TEST_CASE("updater is a no-op without adjustment evidence") {
    const SkillSet starter = starter_skill();
    const std::vector<TaskSpec> batch{family_task(Family::G1, 0), family_task(Family::G2, 1)};

    SUBCASE("every rollout passed comfortably") {
        const std::vector<TaskRecord> rollouts{healthy_pass(batch[0]), healthy_pass(batch[1])};
        const auto out = rule_based_update(starter, batch, rollouts, 1);
        REQUIRE(out.size() == 1);
        CHECK(render_skill(out[0]) == render_skill(starter));
    }

    SUBCASE("only infrastructure noise failed") {
        const std::vector<TaskRecord> rollouts{infra_failure(batch[0]), healthy_pass(batch[1])};
        const auto out = rule_based_update(starter, batch, rollouts, 1);
        REQUIRE(out.size() == 1);
        CHECK(render_skill(out[0]) == render_skill(starter));
    }
}

TEST_CASE("amplitude evidence advances the family and rewrites the repair") {
    const SkillSet starter = starter_skill();
    const std::vector<TaskSpec> batch{family_task(Family::G1, 2)};
    const std::vector<TaskRecord> rollouts{margin_failure(batch[0], 0)};

    const auto out = rule_based_update(starter, batch, rollouts, 1);
    REQUIRE(out.size() == 2); // conservative + aggressive variants

    const FamilyRule before = effective_rule(starter, "G1");
    for (const SkillSet& candidate : out) {
        const FamilyRule after = effective_rule(candidate, "G1");
        CHECK(after.learning_rate < before.learning_rate);
        CHECK(after.steps > before.steps);
        // caps must admit the tuned recipe plus retry headroom
        CHECK(candidate.rules.globals.step_cap > starter.rules.globals.step_cap);
        CHECK(candidate.rules.globals.lr_floor <= after.learning_rate);
        CHECK(candidate.rules.globals.max_restarts >= after.restarts);
        CHECK(candidate.rules.repairs.at(std::string(kRepairAmplitudeMiss)) == "add_restart");
        CHECK(candidate.overview.find("Iteration 1") != std::string::npos);
    }
    // the aggressive variant reaches further down the ladder
    CHECK(effective_rule(out[1], "G1").learning_rate <
          effective_rule(out[0], "G1").learning_rate);
}

TEST_CASE("phase evidence hops further than an amplitude miss") {
    const SkillSet starter = starter_skill();
    const std::vector<TaskSpec> g6{family_task(Family::G6, 3)};
    REQUIRE(g6[0].criteria.size() == 2);
    REQUIRE(g6[0].criteria[1].metric == Metric::ZeroOrderTransmissionPhaseDeg);
    const std::vector<TaskSpec> g1{family_task(Family::G1, 4)};

    const auto phase_out = rule_based_update(starter, g6, {margin_failure(g6[0], 1)}, 1);
    const auto amp_out = rule_based_update(starter, g1, {margin_failure(g1[0], 0)}, 1);
    REQUIRE(!phase_out.empty());
    REQUIRE(!amp_out.empty());
    CHECK(effective_rule(phase_out[0], "G6").learning_rate <
          effective_rule(amp_out[0], "G1").learning_rate);
}

TEST_CASE("thin passes count as evidence") {
    const SkillSet starter = starter_skill();
    const std::vector<TaskSpec> batch{family_task(Family::G5, 5)};

    TaskRecord retried = healthy_pass(batch[0]);
    retried.attempts = 2;
    retried.first_success_attempt = 2;
    const auto retry_out = rule_based_update(starter, batch, {retried}, 2);
    REQUIRE(retry_out.size() >= 1);
    CHECK(effective_rule(retry_out[0], "G5").steps > effective_rule(starter, "G5").steps);

    TaskRecord razor = healthy_pass(batch[0]);
    razor.bm = 0.002; // passes, but a sibling instance would not
    const auto razor_out = rule_based_update(starter, batch, {razor}, 2);
    REQUIRE(razor_out.size() >= 1);
    CHECK(effective_rule(razor_out[0], "G5").steps > effective_rule(starter, "G5").steps);
}

TEST_CASE("iteration batches are seeded samples of the training split") {
    const SplitSet splits = build_splits("IID", 4242);
    EvolutionState state;
    state.current = starter_skill();
    state.iteration = 1;
    const auto make_gen = [] { return std::make_unique<ScriptedGenerator>(); };
    const HarnessConfig config;

    const auto first =
        run_iteration(state, splits.train, 10, config, make_gen, rule_based_update, 7);
    const auto again =
        run_iteration(state, splits.train, 10, config, make_gen, rule_based_update, 7);
    REQUIRE(first.batch.size() == 10);
    REQUIRE(first.rollouts.size() == 10);
    std::vector<std::string> ids_first, ids_again;
    for (const TaskSpec& t : first.batch) ids_first.push_back(t.task_id);
    for (const TaskSpec& t : again.batch) ids_again.push_back(t.task_id);
    CHECK(ids_first == ids_again);
    CHECK(std::set<std::string>(ids_first.begin(), ids_first.end()).size() == 10);

    state.iteration = 2;
    const auto second =
        run_iteration(state, splits.train, 10, config, make_gen, rule_based_update, 7);
    std::vector<std::string> ids_second;
    for (const TaskSpec& t : second.batch) ids_second.push_back(t.task_id);
    CHECK(ids_first != ids_second);

    CHECK_THROWS_AS(
        run_iteration(state, splits.train, 0, config, make_gen, rule_based_update, 7),
        std::invalid_argument);
    CHECK_THROWS_AS(run_iteration(state, splits.train, static_cast<int>(splits.train.size()) + 1,
                                  config, make_gen, rule_based_update, 7),
                    std::invalid_argument);
}

TEST_CASE("a crashing updater is reported, not fatal") {
    const SplitSet splits = build_splits("IID", 4242);
    EvolutionState state;
    state.current = starter_skill();
    state.iteration = 1;
    const auto make_gen = [] { return std::make_unique<ScriptedGenerator>(); };
    const Updater boom = [](const SkillSet&, const std::vector<TaskSpec>&,
                            const std::vector<TaskRecord>&, int) -> std::vector<SkillSet> {
        throw std::runtime_error("updater exploded");
    };

    const auto out = run_iteration(state, splits.train, 5, HarnessConfig{}, make_gen, boom, 7);
    CHECK(out.updater_failed);
    CHECK(out.updater_error.find("updater exploded") != std::string::npos);
    CHECK(out.candidates.empty());
}

TEST_CASE("candidates are version-stamped by iteration and emission order") {
    const SplitSet splits = build_splits("IID", 4242);
    EvolutionState state;
    state.current = starter_skill();
    state.iteration = 3; // three completed passes: proposals belong to pass four
    const auto make_gen = [] { return std::make_unique<ScriptedGenerator>(); };

    const auto out = run_iteration(state, splits.train, 20, HarnessConfig{}, make_gen,
                                   rule_based_update, 7);
    REQUIRE(!out.candidates.empty());
    for (std::size_t i = 0; i < out.candidates.size(); ++i) {
        CHECK(out.candidates[i].version.iteration == 4);
        CHECK(out.candidates[i].version.sub_iteration == static_cast<int>(i) + 1);
    }
}

TEST_CASE("skill archive lays out snapshot and per-round mounts") {
    const fs::path root = fresh_dir("skillstack_archive_test");
    SkillSet skill = starter_skill();
    skill.version = {2, 1};

    const auto paths = archive_skill(root, skill, 2, 3);
    const fs::path snapshot = root / "meta_agent" / "skills" / "learning-context-iter2" /
                              "SKILL.md";
    CHECK(fs::exists(snapshot));
    for (int round = 1; round <= 3; ++round) {
        const fs::path mount = root / "iter2_sub1" / "codegen" /
                               ("iter_" + std::to_string(round)) / ".agents" / "skills" /
                               "learning-context";
        CHECK(fs::exists(mount / "SKILL.md"));
        CHECK(slurp(mount / "SKILL.md") == slurp(snapshot));
        for (const auto& [name, body] : reference_files()) {
            CHECK(fs::exists(mount / "reference" / name));
            CHECK(slurp(mount / "reference" / name) == body);
        }
    }
    for (const fs::path& p : paths) CHECK(fs::exists(p));

    // re-archiving must be byte-idempotent
    const auto before = tree_bytes(root);
    archive_skill(root, skill, 2, 3);
    CHECK(tree_bytes(root) == before);
    fs::remove_all(root);
}

TEST_CASE("evaluator fingerprint is stable") {
    const std::string a = evaluator_fingerprint();
    const std::string b = evaluator_fingerprint();
    CHECK(a == b);
    REQUIRE(a.size() == 16);
    CHECK(a.find_first_not_of("0123456789abcdef") == std::string::npos);
}

TEST_CASE("evolution run lifts the starter past the acceptance bar") {
    const SplitSet splits = build_splits("IID", 4242);
    const auto make_gen = [] { return std::make_unique<ScriptedGenerator>(); };
    EvolveConfig config;
    config.seed = 99;
    config.jobs = 4;

    const fs::path dir = fresh_dir("skillstack_evolve_test");
    const EvolveResult result = evolve(dir, splits, make_gen, rule_based_update, config);

    CHECK(result.baseline_test.sg <= 0.40);
    CHECK(result.post_test.sg >= 0.80);
    CHECK(result.post_test.se == 1.0);
    REQUIRE(result.baseline_test.attempts_mean > 0.0);
    const double reduction = (result.baseline_test.attempts_mean -
                              result.post_test.attempts_mean) /
                             result.baseline_test.attempts_mean;
    CHECK(reduction >= 0.30);

    // render -> parse -> render must be a fixed point for the evolved skill
    const std::string rendered = render_skill(result.selected);
    CHECK(render_skill(parse_skill(rendered)) == rendered);

    const nlohmann::json manifest = nlohmann::json::parse(slurp(result.manifest_path));
    CHECK(manifest.at("selected").get<std::string>() == result.selected_id);
    CHECK(manifest.at("evaluator_fingerprint").at("frozen").get<bool>());
    CHECK(manifest.at("hygiene").at("test_ids_in_refinement_logs").get<int>() == 0);

    // pool-wide optimality: the final pick dominates starter and every candidate
    const double selected_sg = [&] {
        if (result.selected_id == "iter0_sub0")
            return manifest.at("starter").at("validation").at("sg").get<double>();
        for (const auto& it : manifest.at("iterations"))
            for (const auto& cand : it.at("candidates"))
                if (cand.at("id").get<std::string>() == result.selected_id)
                    return cand.at("validation").at("sg").get<double>();
        FAIL("selected id missing from manifest");
        return 0.0;
    }();
    CHECK(selected_sg >= manifest.at("starter").at("validation").at("sg").get<double>());
    for (const auto& it : manifest.at("iterations"))
        for (const auto& cand : it.at("candidates"))
            CHECK(selected_sg >= cand.at("validation").at("sg").get<double>());

    // expected artifacts from one run
    CHECK(fs::exists(dir / "splits.json"));
    CHECK(fs::exists(dir / "logs" / "validation_iter0_sub0.jsonl"));
    CHECK(fs::exists(dir / "logs" / "test_baseline.jsonl"));
    CHECK(fs::exists(dir / "logs" / "test_post.jsonl"));
    CHECK(fs::exists(dir / "logs" / "train_iter1.jsonl"));
    CHECK(fs::exists(dir / "archive" / "meta_agent" / "skills" / "learning-context-iter1" /
                     "SKILL.md"));
    CHECK(fs::exists(dir / "report" / "table1.csv"));
    CHECK(fs::exists(dir / "report" / "metrics.json"));
    fs::remove_all(dir);
}

TEST_CASE("evolution runs are byte-deterministic") {
    const SplitSet splits = build_splits("IID", 4242);
    const auto make_gen = [] { return std::make_unique<ScriptedGenerator>(); };
    EvolveConfig config;
    config.seed = 99;
    config.jobs = 4;

    const fs::path dir_a = fresh_dir("skillstack_evolve_det_a");
    const fs::path dir_b = fresh_dir("skillstack_evolve_det_b");
    evolve(dir_a, splits, make_gen, rule_based_update, config);
    evolve(dir_b, splits, make_gen, rule_based_update, config);
    CHECK(tree_bytes(dir_a) == tree_bytes(dir_b));

    // a different worker count only changes the echoed jobs knob
    config.jobs = 1;
    const fs::path dir_c = fresh_dir("skillstack_evolve_det_c");
    evolve(dir_c, splits, make_gen, rule_based_update, config);
    auto files_a = tree_bytes(dir_a);
    auto files_c = tree_bytes(dir_c);
    CHECK(files_a.size() == files_c.size());
    for (auto& [name, bytes] : files_a) {
        if (name == "evolution_manifest.json") continue;
        CHECK(files_c.at(name) == bytes);
    }
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    fs::remove_all(dir_c);
}
