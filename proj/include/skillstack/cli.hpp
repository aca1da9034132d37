#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "skillstack/harness.hpp"
#include "skillstack/llm.hpp"

namespace skillstack {

inline constexpr std::string_view kCliVersion = "0.1.0";

// Everything a run depends on, resolvable from one JSON document and
// overridable per-flag. The LLM credential is the lone exception: it comes
// from the SKILLSTACK_API_KEY environment variable and is never read from,
// written to, or hashed into any artifact.
struct RunConfig {
    std::string setting = "IID"; // or "OOD"
    std::uint64_t task_seed = 4242; // benchmark sampling stream
    std::uint64_t seed = 0;         // rollout + evolution streams
    HarnessConfig harness;
    std::string generator = "scripted"; // or "llm"
    std::string fault = "none";         // scripted-backend fault injection
    std::string updater = "rule-based"; // or "llm"
    LlmConfig endpoint;
    int iterations = 4;
    int batch_size = 20;
    std::string out;
    int jobs = 0; // 0 = all available execution units
};

// In-process entry point used by both main() and the tests. argv follows the
// usual argc/argv convention including the program name. Writes results to
// `out` and a single-line error JSON to `err` on failure.
//
// Exit status: 0 = ok, 1 = run completed but some task never reached SG = 1,
// 2 = configuration or module error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace skillstack
