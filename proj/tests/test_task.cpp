#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "skillstack/task.hpp"

using namespace skillstack;

namespace {

// Bare-format fixtures exercising each benchmark family shape.
const char* kTaskG1 = R"({
  "query": "Design a single-layer reflective grating at 0.632 um. Use high-index layer n=2.436, k=0.000, substrate n=1.363. Use TE polarization at normal incidence and maximize total reflection efficiency.",
  "gt_eval": {
    "wavelength_um": [0.632],
    "criteria": [
      {"metric": "total_reflection", "params": {"wavelength_index": 0},
       "operation": ">=", "target": 0.8}
    ]
  },
  "reference": "10.1038/s42005-021-00568-6"
})";

const char* kTaskG2 = R"({
  "query": "Design a single-layer reflective grating at 0.632 um for two angles (0 deg and 5.0 deg). Use high-index layer n=2.436, substrate n=1.363, and TE polarization. Maximize the product of reflectances at both angles.",
  "gt_eval": {
    "wavelength_um": [0.632],
    "criteria": [
      {"metric": "total_reflection", "params": {"source_index": 0, "wavelength_index": 0},
       "operation": ">=", "target": 0.7},
      {"metric": "total_reflection", "params": {"source_index": 1, "wavelength_index": 0},
       "operation": ">=", "target": 0.7}
    ]
  },
  "reference": "10.1038/s42005-021-00568-6"
})";

const char* kTaskG3 = R"({
  "query": "Design a reflective line grating at 0.632 um. Use high-index layer n=2.436, substrate n=1.363. Optimize thickness so TE reflection is high while TM reflection is low.",
  "gt_eval": {
    "wavelength_um": [0.632],
    "criteria": [
      {"metric": "total_reflection", "params": {"source_index": 0, "wavelength_index": 0},
       "operation": ">=", "target": 0.8},
      {"metric": "total_reflection", "params": {"source_index": 1, "wavelength_index": 0},
       "operation": "<=", "target": 0.2}
    ]
  },
  "reference": "10.1038/s42005-021-00568-6"
})";

const char* kTaskG4 = R"({
  "query": "Design a reflective grating jointly for 0.632 um and 0.530 um. Use high-index layer n=2.436, substrate n=1.363, and TE polarization. Maximize reflection at both wavelengths.",
  "gt_eval": {
    "wavelength_um": [0.53, 0.632],
    "criteria": [
      {"metric": "total_reflection", "params": {"wavelength_index": 0},
       "operation": ">=", "target": 0.7},
      {"metric": "total_reflection", "params": {"wavelength_index": 1},
       "operation": ">=", "target": 0.7}
    ]
  },
  "reference": "10.1038/s42005-021-00568-6"
})";

const char* kTaskG5 = R"({
  "query": "Design a plasmonic reflective grating at 0.632 um. Use metallic patterned layer with n=1.3523, k=7.9137, and substrate n=1.363. Use TE polarization at normal incidence and maximize total reflection efficiency.",
  "gt_eval": {
    "wavelength_um": [0.632],
    "criteria": [
      {"metric": "total_reflection", "params": {"wavelength_index": 0},
       "operation": ">=", "target": 0.8}
    ]
  },
  "reference": "10.1038/s42005-021-00568-6"
})";

const char* kTaskG6 = R"({
  "query": "Design a rectangular pillar metasurface unit cell at 5.200 um, modeled as two PbTe layers on a CaF2 incidence medium. Optimize thicknesses to exceed 0.5566 total transmission and reach a transmitted TM phase of 347.75 degrees with phase error < 5.0 degrees.",
  "gt_eval": {
    "wavelength_um": [5.2],
    "criteria": [
      {"metric": "total_transmission", "params": {"wavelength_index": 0},
       "operation": ">=", "target": 0.5566},
      {"metric": "zero_order_transmission_phase_deg", "params": {"component": "x", "wavelength_index": 0},
       "operation": "close_to", "target": 347.7508, "tolerance": 5.0}
    ]
  },
  "reference": "10.1515/nanoph-2025-0507"
})";

const char* kTaskGaux = R"({
  "query": "Design a polygon pillar metasurface unit cell at 5.200 um, modeled as stacked PbTe layers on a CaF2 incidence medium. Optimize thicknesses to exceed 0.57 total transmission and reach a transmitted TE phase of 359.7 degrees with phase error < 2.0 degrees.",
  "gt_eval": {
    "wavelength_um": [5.2],
    "criteria": [
      {"metric": "total_transmission", "params": {"wavelength_index": 0},
       "operation": ">=", "target": 0.5687},
      {"metric": "zero_order_transmission_phase_deg", "params": {"component": "y", "wavelength_index": 0},
       "operation": "close_to", "target": 359.7388, "tolerance": 2.0}
    ]
  },
  "reference": "10.1515/nanoph-2025-0507"
})";

TaskError code_of(const std::string& text) {
    try {
        parse_task(text);
    } catch (const TaskParseError& e) {
        return e.code;
    }
    FAIL("expected a parse error");
    return TaskError::BadValue;
}

} // namespace

TEST_CASE("single-criterion reflective task parses with inferred context") {
    const TaskSpec t = parse_task(kTaskG1);
    CHECK(t.family == Family::G1);
    CHECK(t.physical_context.wavelengths_um == std::vector<double>{0.632});
    REQUIRE(t.criteria.size() == 1);
    CHECK(t.criteria[0].metric == Metric::TotalReflection);
    CHECK(t.criteria[0].operation == CriterionOp::Ge);
    CHECK(t.criteria[0].target == 0.8);
    CHECK(t.criteria[0].wavelength_index == 0);
    CHECK(t.reference == "10.1038/s42005-021-00568-6");
    CHECK(!t.task_id.empty());
    CHECK(t.design_space.params.size() == 1);
}

TEST_CASE("family is inferred from the criteria shape") {
    CHECK(parse_task(kTaskG2).family == Family::G2);
    CHECK(parse_task(kTaskG3).family == Family::G3);
    CHECK(parse_task(kTaskG4).family == Family::G4);
    CHECK(parse_task(kTaskG5).family == Family::G5);
    CHECK(parse_task(kTaskG6).family == Family::G6);
    CHECK(parse_task(kTaskGaux).family == Family::Gaux);
}

TEST_CASE("transmissive phase task keeps both criteria in order") {
    const TaskSpec t = parse_task(kTaskG6);
    REQUIRE(t.criteria.size() == 2);
    CHECK(t.criteria[0].metric == Metric::TotalTransmission);
    CHECK(t.criteria[0].target == 0.5566);
    CHECK(t.criteria[1].metric == Metric::ZeroOrderTransmissionPhaseDeg);
    CHECK(t.criteria[1].operation == CriterionOp::CloseTo);
    CHECK(t.criteria[1].target == 347.7508);
    CHECK(t.criteria[1].tolerance == 5.0);
    CHECK(t.criteria[1].component == "x");
    // the inferred transmission context sends light from the dense side to air
    CHECK(t.physical_context.superstrate_index.real() > 1.0);
    CHECK(t.physical_context.substrate_index == std::complex<double>(1.0, 0.0));
}

TEST_CASE("parse errors carry the right codes") {
    CHECK(code_of("{ not json") == TaskError::MalformedJson);
    CHECK(code_of("[1,2]") == TaskError::MalformedJson);

    std::string s(kTaskG6);
    auto at = s.find("\"close_to\", \"target\": 347.7508, \"tolerance\": 5.0");
    REQUIRE(at != std::string::npos);
    std::string no_tol = s.substr(0, at) + "\"close_to\", \"target\": 347.7508" +
                         s.substr(at + std::string("\"close_to\", \"target\": 347.7508, \"tolerance\": 5.0").size());
    CHECK(code_of(no_tol) == TaskError::MissingTolerance);

    std::string bad_metric(kTaskG1);
    auto mpos = bad_metric.find("total_reflection");
    bad_metric.replace(mpos, std::string("total_reflection").size(), "total_absorption");
    CHECK(code_of(bad_metric) == TaskError::UnknownMetric);

    std::string bad_index(kTaskG1);
    auto ipos = bad_index.find("\"wavelength_index\": 0");
    bad_index.replace(ipos, std::string("\"wavelength_index\": 0").size(),
                      "\"wavelength_index\": 3");
    CHECK(code_of(bad_index) == TaskError::BadWavelengthIndex);

    std::string extra(kTaskG1);
    auto qpos = extra.find("\"query\"");
    extra.insert(qpos, "\"surprise\": 1,\n  ");
    CHECK(code_of(extra) == TaskError::UnknownField);
}

TEST_CASE("round-trip through serialize preserves the TaskSpec") {
    for (const char* text : {kTaskG1, kTaskG2, kTaskG3, kTaskG4, kTaskG5, kTaskG6, kTaskGaux}) {
        const TaskSpec first = parse_task(text);
        const TaskSpec second = parse_task(serialize_task(first));
        CHECK(first == second);
        // serialization is stable byte-for-byte once in extended form
        CHECK(serialize_task(first) == serialize_task(second));
    }
}

TEST_CASE("sources are the angle-major cross product") {
    PhysicalContext ctx;
    ctx.wavelengths_um = {1.0};
    ctx.incidence_angles_deg = {0.0, 30.0};
    ctx.polarizations = {Polarization::TE, Polarization::TM};
    const auto sources = sources_of(ctx);
    REQUIRE(sources.size() == 4);
    CHECK(sources[0] == Source{0.0, Polarization::TE});
    CHECK(sources[1] == Source{0.0, Polarization::TM});
    CHECK(sources[2] == Source{30.0, Polarization::TE});
    CHECK(sources[3] == Source{30.0, Polarization::TM});
}

TEST_CASE("design parameter names parse into layer roles") {
    CHECK(parse_param_name("thickness_0") == std::pair{true, 0});
    CHECK(parse_param_name("thickness_12") == std::pair{true, 12});
    CHECK(parse_param_name("index_2") == std::pair{false, 2});
    CHECK_THROWS_AS((void)parse_param_name("width_0"), TaskParseError);
    CHECK_THROWS_AS((void)parse_param_name("thickness_"), TaskParseError);
    CHECK_THROWS_AS((void)parse_param_name("thickness_x"), TaskParseError);
}

TEST_CASE("identical bare files map to one task identity") {
    const TaskSpec a = parse_task(kTaskG1);
    const TaskSpec b = parse_task(std::string("  ") + kTaskG1); // whitespace irrelevant
    CHECK(a.task_id == b.task_id);
}
