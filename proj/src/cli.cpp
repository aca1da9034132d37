#include "skillstack/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "skillstack/evolution.hpp"
#include "skillstack/metrics.hpp"
#include "skillstack/report.hpp"
#include "skillstack/rng.hpp"

namespace skillstack {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

void require_keys(const ordered_json& doc, const std::set<std::string>& allowed,
                  const std::string& where) {
    for (const auto& [key, value] : doc.items())
        if (!allowed.count(key))
            throw std::invalid_argument("unknown config key '" + where + key + "'");
}

// The single-document run config. Flags parsed afterwards override whatever
// this loads, so the file acts as a set of defaults.
void apply_config_file(RunConfig& cfg, const fs::path& path) {
    const ordered_json doc = ordered_json::parse(slurp(path));
    require_keys(doc,
                 {"setting", "task_seed", "seed", "rounds", "attempts", "budget", "generator",
                  "fault", "updater", "endpoint", "iterations", "batch_size", "out", "jobs"},
                 "");
    if (doc.contains("setting")) cfg.setting = doc.at("setting").get<std::string>();
    if (doc.contains("task_seed")) cfg.task_seed = doc.at("task_seed").get<std::uint64_t>();
    if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("rounds")) cfg.harness.outer_rounds = doc.at("rounds").get<int>();
    if (doc.contains("attempts")) cfg.harness.inner_attempts = doc.at("attempts").get<int>();
    if (doc.contains("budget")) cfg.harness.solver_budget = doc.at("budget").get<long>();
    if (doc.contains("generator")) cfg.generator = doc.at("generator").get<std::string>();
    if (doc.contains("fault")) cfg.fault = doc.at("fault").get<std::string>();
    if (doc.contains("updater")) cfg.updater = doc.at("updater").get<std::string>();
    if (doc.contains("iterations")) cfg.iterations = doc.at("iterations").get<int>();
    if (doc.contains("batch_size")) cfg.batch_size = doc.at("batch_size").get<int>();
    if (doc.contains("out")) cfg.out = doc.at("out").get<std::string>();
    if (doc.contains("jobs")) cfg.jobs = doc.at("jobs").get<int>();
    if (doc.contains("endpoint")) {
        const ordered_json& ep = doc.at("endpoint");
        require_keys(ep,
                     {"base_url", "path", "model", "temperature", "max_tokens",
                      "timeout_seconds", "max_transport_retries", "log_dir"},
                     "endpoint.");
        if (ep.contains("base_url")) cfg.endpoint.base_url = ep.at("base_url").get<std::string>();
        if (ep.contains("path")) cfg.endpoint.path = ep.at("path").get<std::string>();
        if (ep.contains("model")) cfg.endpoint.model = ep.at("model").get<std::string>();
        if (ep.contains("temperature"))
            cfg.endpoint.temperature = ep.at("temperature").get<double>();
        if (ep.contains("max_tokens")) cfg.endpoint.max_tokens = ep.at("max_tokens").get<int>();
        if (ep.contains("timeout_seconds"))
            cfg.endpoint.timeout_seconds = ep.at("timeout_seconds").get<int>();
        if (ep.contains("max_transport_retries"))
            cfg.endpoint.max_transport_retries = ep.at("max_transport_retries").get<int>();
        if (ep.contains("log_dir")) cfg.endpoint.log_dir = ep.at("log_dir").get<std::string>();
    }
}

// Canonical resolved-config document: every effective value, in fixed order,
// with the credential deliberately absent.
ordered_json resolved_config(const RunConfig& cfg) {
    return ordered_json{
        {"setting", cfg.setting},
        {"task_seed", cfg.task_seed},
        {"seed", cfg.seed},
        {"rounds", cfg.harness.outer_rounds},
        {"attempts", cfg.harness.inner_attempts},
        {"budget", cfg.harness.solver_budget},
        {"generator", cfg.generator},
        {"fault", cfg.fault},
        {"updater", cfg.updater},
        {"endpoint",
         ordered_json{{"base_url", cfg.endpoint.base_url},
                      {"path", cfg.endpoint.path},
                      {"model", cfg.endpoint.model},
                      {"temperature", cfg.endpoint.temperature},
                      {"max_tokens", cfg.endpoint.max_tokens},
                      {"timeout_seconds", cfg.endpoint.timeout_seconds}}},
        {"iterations", cfg.iterations},
        {"batch_size", cfg.batch_size},
        {"out", cfg.out},
        {"jobs", cfg.jobs}};
}

// Reproducibility stamp written next to every artifact set: enough to re-run
// the exact experiment and to prove which evaluator scored it. No clocks.
void write_stamp(const fs::path& dir, const std::string& command, const RunConfig& cfg) {
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(resolved_config(cfg).dump())));
    const ordered_json stamp{
        {"command", command},
        {"config_hash", hash},
        {"config", resolved_config(cfg)},
        {"seeds", ordered_json{{"task_seed", cfg.task_seed}, {"seed", cfg.seed}}},
        {"modules", ordered_json{{"skillstack", std::string(kCliVersion)},
                                 {"evaluator_fingerprint", evaluator_fingerprint()}}}};
    spill(dir / "run_stamp.json", stamp.dump(2) + "\n");
}

LlmConfig endpoint_with_credential(const RunConfig& cfg) {
    LlmConfig ep = cfg.endpoint;
    if (ep.base_url.empty())
        throw std::invalid_argument("llm backend selected but no endpoint configured");
    if (const char* key = std::getenv("SKILLSTACK_API_KEY")) ep.api_key = key;
    return ep;
}

GeneratorFactory generator_factory(const RunConfig& cfg) {
    if (cfg.generator == "scripted") {
        const FaultProfile profile = fault_profile_from_name(cfg.fault);
        return [profile] { return std::make_unique<ScriptedGenerator>(profile); };
    }
    if (cfg.generator == "llm") {
        const LlmConfig ep = endpoint_with_credential(cfg);
        return [ep] { return std::make_unique<LlmGenerator>(ep); };
    }
    throw std::invalid_argument("unknown generator '" + cfg.generator + "'");
}

Updater updater_by_name(const RunConfig& cfg) {
    if (cfg.updater == "rule-based") return rule_based_update;
    if (cfg.updater == "llm") return make_llm_updater(endpoint_with_credential(cfg));
    throw std::invalid_argument("unknown updater '" + cfg.updater + "'");
}

SkillSet load_skill(const std::string& arg) {
    if (arg == "starter") return starter_skill();
    return parse_skill(slurp(arg));
}

SplitSet load_splits(const RunConfig& cfg, const std::string& splits_path) {
    if (!splits_path.empty()) return parse_splits(slurp(splits_path));
    return build_splits(cfg.setting, cfg.task_seed);
}

std::vector<TaskRecord> read_rollout_log(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot read " + path.string());
    std::vector<TaskRecord> records;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) records.push_back(parse_task_record(line));
    return records;
}

int resolve_jobs(int jobs) {
    if (jobs > 0) return jobs;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

void require_out(const RunConfig& cfg) {
    if (cfg.out.empty())
        throw std::invalid_argument("no output directory: pass --out or set \"out\"");
}

std::string serialize_records(const std::vector<TaskRecord>& records) {
    std::string text;
    for (const TaskRecord& rec : records) text += serialize_task_record(rec) + "\n";
    return text;
}

bool any_task_failed(const std::vector<TaskRecord>& records) {
    for (const TaskRecord& rec : records)
        if (rec.sg < 1.0) return true;
    return false;
}

ordered_json metrics_doc(const DatasetMetrics& m) {
    return ordered_json{{"sg", m.sg},           {"se", m.se},
                        {"cpf", m.cpf},         {"bm", m.bm},
                        {"attempts_mean", m.attempts_mean},
                        {"n", m.n},             {"bm_excluded", m.bm_excluded}};
}

int run_gen_tasks(const RunConfig& cfg, std::ostream& out) {
    require_out(cfg);
    const SplitSet splits = build_splits(cfg.setting, cfg.task_seed);
    const fs::path dir(cfg.out);
    spill(dir / "splits.json", serialize_splits(splits));
    write_stamp(dir, "gen-tasks", cfg);
    out << ordered_json{{"setting", splits.setting},
                        {"seed", splits.seed},
                        {"counts", ordered_json{{"train", splits.train.size()},
                                                {"validation", splits.validation.size()},
                                                {"test", splits.test.size()}}},
                        {"splits", (dir / "splits.json").string()}}
               .dump(2)
        << "\n";
    return 0;
}

int run_solve(const RunConfig& cfg, const std::string& task_path, const std::string& skill_arg,
              std::ostream& out) {
    const TaskSpec task = parse_task(slurp(task_path));
    const SkillSet skills = load_skill(skill_arg);
    const auto generator = generator_factory(cfg)();
    const TaskRecord record =
        codegen_eval(task, skills, *generator, cfg.harness, derive_seed(cfg.seed, "solve", 0));
    if (!cfg.out.empty()) {
        const fs::path dir(cfg.out);
        spill(dir / "record.jsonl", serialize_task_record(record) + "\n");
        write_stamp(dir, "solve", cfg);
    }
    out << serialize_task_record(record) << "\n";
    return record.sg == 1.0 ? 0 : 1;
}

int run_evaluate(const RunConfig& cfg, const std::string& splits_path, const std::string& split,
                 const std::string& skill_arg, std::ostream& out) {
    require_out(cfg);
    const SplitSet splits = load_splits(cfg, splits_path);
    const std::vector<TaskSpec>* tasks = nullptr;
    std::string tag; // matches the seed tags an evolve run uses
    if (split == "train") {
        tasks = &splits.train;
        tag = "train";
    } else if (split == "validation" || split == "val") {
        tasks = &splits.validation;
        tag = "val";
    } else if (split == "test") {
        tasks = &splits.test;
        tag = "test";
    } else {
        throw std::invalid_argument("unknown split '" + split + "'");
    }

    const SkillSet skills = load_skill(skill_arg);
    const std::vector<TaskRecord> records =
        evaluate_split(*tasks, skills, generator_factory(cfg), cfg.harness, cfg.seed, tag,
                       resolve_jobs(cfg.jobs));
    const DatasetMetrics metrics = aggregate(records);

    const fs::path dir(cfg.out);
    spill(dir / ("rollouts_" + split + ".jsonl"), serialize_records(records));
    spill(dir / ("metrics_" + split + ".json"), metrics_doc(metrics).dump(2) + "\n");
    write_stamp(dir, "evaluate", cfg);
    out << metrics_doc(metrics).dump(2) << "\n";
    return any_task_failed(records) ? 1 : 0;
}

int run_evolve(const RunConfig& cfg, const std::string& splits_path, std::ostream& out) {
    require_out(cfg);
    const SplitSet splits = load_splits(cfg, splits_path);
    EvolveConfig evo;
    evo.iterations = cfg.iterations;
    evo.batch_size = cfg.batch_size;
    evo.harness = cfg.harness;
    evo.seed = cfg.seed;
    evo.jobs = resolve_jobs(cfg.jobs);
    const EvolveResult result =
        evolve(cfg.out, splits, generator_factory(cfg), updater_by_name(cfg), evo);
    write_stamp(cfg.out, "evolve", cfg);
    out << ordered_json{{"selected", result.selected_id},
                        {"baseline_test", metrics_doc(result.baseline_test)},
                        {"post_test", metrics_doc(result.post_test)},
                        {"manifest", result.manifest_path.string()}}
               .dump(2)
        << "\n";
    return result.post_test.sg < 1.0 ? 1 : 0;
}

int run_report(const RunConfig& cfg, const std::string& baseline_path,
               const std::string& post_path, ReportOptions options, std::ostream& out) {
    require_out(cfg);
    const std::vector<TaskRecord> baseline = read_rollout_log(baseline_path);
    const std::vector<TaskRecord> post =
        post_path.empty() ? baseline : read_rollout_log(post_path);
    write_report(cfg.out, baseline, post, options);
    write_stamp(cfg.out, "report", cfg);
    out << ordered_json{{"dir", cfg.out},
                        {"baseline_records", baseline.size()},
                        {"post_records", post.size()}}
               .dump(2)
        << "\n";
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    try {
        RunConfig cfg;

        // the config file is applied before flag parsing so flags win
        for (int i = 1; i < argc; ++i) {
            const std::string_view arg = argv[i];
            if (arg == "--config" && i + 1 < argc) apply_config_file(cfg, argv[i + 1]);
            else if (arg.rfind("--config=", 0) == 0)
                apply_config_file(cfg, std::string(arg.substr(9)));
        }

        CLI::App app{"layered-stack design benchmark: generate, solve, evaluate, evolve, report"};
        app.require_subcommand(1);
        std::string config_path;
        app.add_option("--config", config_path,
                       "JSON run config; any flag below overrides its value");

        const auto add_common = [&cfg](CLI::App* sub) {
            sub->add_option("--seed", cfg.seed, "rollout seed (never wall-clock)");
            sub->add_option("--out", cfg.out, "output directory");
        };
        const auto add_harness = [&cfg](CLI::App* sub) {
            sub->add_option("--rounds", cfg.harness.outer_rounds, "session-reset rounds R");
            sub->add_option("--attempts", cfg.harness.inner_attempts,
                            "feedback-coupled attempts per round A");
            sub->add_option("--budget", cfg.harness.solver_budget,
                            "solver evaluations per attempt");
        };
        const auto add_generator = [&cfg](CLI::App* sub) {
            sub->add_option("--generator", cfg.generator, "scripted | llm");
            sub->add_option("--fault", cfg.fault,
                            "scripted fault profile: none | always-omit | bad-index | "
                            "nan-loss | misuse-eta");
            sub->add_option("--endpoint", cfg.endpoint.base_url,
                            "chat endpoint base url (API key via SKILLSTACK_API_KEY)");
            sub->add_option("--model", cfg.endpoint.model, "model name sent to the endpoint");
        };

        std::function<int()> action;

        CLI::App* gen = app.add_subcommand("gen-tasks", "sample the benchmark splits");
        gen->add_option("--setting", cfg.setting, "IID | OOD");
        gen->add_option("--seed", cfg.task_seed, "benchmark sampling seed");
        gen->add_option("--out", cfg.out, "output directory");
        gen->callback([&] { action = [&] { return run_gen_tasks(cfg, out); }; });

        std::string task_path, skill_arg = "starter";
        CLI::App* solve = app.add_subcommand("solve", "run one task under one skill");
        solve->add_option("--task", task_path, "task JSON file")->required();
        solve->add_option("--skill", skill_arg, "SKILL.md path, or 'starter'");
        add_common(solve);
        add_harness(solve);
        add_generator(solve);
        solve->callback(
            [&] { action = [&] { return run_solve(cfg, task_path, skill_arg, out); }; });

        std::string splits_path, split = "test";
        CLI::App* eval = app.add_subcommand("evaluate", "run a skill over one split");
        eval->add_option("--skill", skill_arg, "SKILL.md path, or 'starter'");
        eval->add_option("--split", split, "train | validation | test");
        eval->add_option("--splits", splits_path, "splits.json from gen-tasks");
        eval->add_option("--setting", cfg.setting, "IID | OOD (when no --splits)");
        eval->add_option("--task-seed", cfg.task_seed, "benchmark sampling seed");
        eval->add_option("--jobs", cfg.jobs, "worker threads (0 = all cores)");
        add_common(eval);
        add_harness(eval);
        add_generator(eval);
        eval->callback([&] {
            action = [&] { return run_evaluate(cfg, splits_path, split, skill_arg, out); };
        });

        CLI::App* evo = app.add_subcommand("evolve", "full train/validate/select loop");
        evo->add_option("--splits", splits_path, "splits.json from gen-tasks");
        evo->add_option("--setting", cfg.setting, "IID | OOD (when no --splits)");
        evo->add_option("--task-seed", cfg.task_seed, "benchmark sampling seed");
        evo->add_option("--iterations", cfg.iterations, "outer evolution iterations");
        evo->add_option("--batch-size", cfg.batch_size, "training tasks per iteration");
        evo->add_option("--updater", cfg.updater, "rule-based | llm");
        evo->add_option("--jobs", cfg.jobs, "worker threads (0 = all cores)");
        add_common(evo);
        add_harness(evo);
        add_generator(evo);
        evo->callback([&] { action = [&] { return run_evolve(cfg, splits_path, out); }; });

        std::string baseline_path, post_path;
        ReportOptions options;
        CLI::App* rep = app.add_subcommand("report", "render a report bundle from rollout logs");
        rep->add_option("--baseline", baseline_path, "baseline rollout log (jsonl)")->required();
        rep->add_option("--post", post_path,
                        "post-train rollout log; omitted = single-condition table");
        rep->add_option("--label", options.dataset_label, "dataset label on the summary table");
        rep->add_option("--passk-max", options.pass_k_max, "largest K in the Pass@K series");
        rep->add_option("--usd-per-token", options.usd_per_token, "dollar rate for token costs");
        rep->add_option("--out", cfg.out, "output directory");
        rep->callback([&] {
            if (!rep->count("--label"))
                options.dataset_label =
                    cfg.setting == "OOD" ? "Out-of-Distribution" : "In-Distribution";
            action = [&] { return run_report(cfg, baseline_path, post_path, options, out); };
        });

        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return 0;
        } catch (const CLI::ParseError& e) {
            err << ordered_json{{"error", ordered_json{{"type", "config"},
                                                       {"message", e.what()}}}}
                       .dump()
                << "\n";
            return 2;
        }
        return action();
    } catch (const std::invalid_argument& e) {
        err << ordered_json{{"error", ordered_json{{"type", "config"}, {"message", e.what()}}}}
                   .dump()
            << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << ordered_json{{"error", ordered_json{{"type", "runtime"}, {"message", e.what()}}}}
                   .dump()
            << "\n";
        return 2;
    }
}

} // namespace skillstack
