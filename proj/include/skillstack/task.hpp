#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace skillstack {

class Rng;

enum class Family { G1, G2, G3, G4, G5, G6, Gaux };
enum class Polarization { TE, TM };
enum class Metric { TotalReflection, TotalTransmission, ZeroOrderTransmissionPhaseDeg };
enum class CriterionOp { Ge, Le, CloseTo };

std::string_view family_name(Family f);
Family family_from_name(std::string_view name);
std::string_view polarization_name(Polarization p);
std::string_view metric_name(Metric m);
std::string_view operation_name(CriterionOp op);

struct PhysicalContext {
    std::vector<double> wavelengths_um;
    std::vector<double> incidence_angles_deg{0.0};
    std::vector<Polarization> polarizations{Polarization::TE};
    std::complex<double> superstrate_index{1.0, 0.0};
    std::complex<double> substrate_index{1.0, 0.0};
    std::vector<std::complex<double>> fixed_layer_indices;

    bool operator==(const PhysicalContext&) const = default;
};

// One plane-wave illumination condition. The solver evaluates every source for
// every wavelength; criteria address them through (wavelength_index, source_index).
struct Source {
    double angle_deg;
    Polarization pol;

    bool operator==(const Source&) const = default;
};

// Cross product angles x polarizations, angle-major: (a0,p0), (a0,p1), (a1,p0), ...
std::vector<Source> sources_of(const PhysicalContext& ctx);

struct DesignParam {
    std::string name;
    double lower_bound;
    double upper_bound;
    std::string unit; // "um" for thicknesses, "1" for dimensionless index scalars

    bool operator==(const DesignParam&) const = default;
};

struct DesignSpace {
    std::vector<DesignParam> params;

    bool operator==(const DesignSpace&) const = default;
};

struct Criterion {
    Metric metric;
    int wavelength_index = 0;
    int source_index = 0;
    std::string component; // "x"/"y" for phase criteria, "" when absent
    CriterionOp operation;
    double target = 0.0;
    std::optional<double> tolerance; // required iff operation == CloseTo

    bool operator==(const Criterion&) const = default;
};

struct TaskSpec {
    std::string task_id;
    Family family;
    std::string query;
    PhysicalContext physical_context;
    DesignSpace design_space;
    std::vector<Criterion> criteria;
    std::string reference;

    bool operator==(const TaskSpec&) const = default;
};

enum class TaskError {
    MalformedJson,
    UnknownField,
    UnknownMetric,
    MissingTolerance,
    BadWavelengthIndex,
    BadValue,
    InfeasibleDraw,
};

struct TaskParseError : std::runtime_error {
    TaskError code;
    TaskParseError(TaskError c, const std::string& what) : std::runtime_error(what), code(c) {}
};

// Accepts both the bare task format (query/gt_eval/reference only — family,
// context and design space are inferred from the criteria shape) and the
// extended format emitted by serialize_task. Unknown fields are an error.
TaskSpec parse_task(std::string_view json_text);
std::string serialize_task(const TaskSpec& task);

struct SplitSet {
    std::string setting; // "IID" | "OOD"
    std::uint64_t seed = 0;
    std::vector<TaskSpec> train;
    std::vector<TaskSpec> validation;
    std::vector<TaskSpec> test;
};

// Splits a design-parameter name into (thickness?, layer ordinal); accepted
// shapes are "thickness_<j>" and "index_<j>". Throws TaskParseError otherwise.
std::pair<bool, int> parse_param_name(std::string_view name);

// Sampled benchmark instance; feasibility is certified by a grid oracle at
// generation time (a draw that the oracle rejects is resampled, bounded).
// Families G1-G6 come in two sibling variants (0/1) with shifted ranges so
// IID splits can hold one sibling out; Gaux has a single template.
TaskSpec generate_family_instance(Family family, Rng& rng, int variant = 0);

SplitSet build_splits(std::string_view setting, std::uint64_t seed);

std::string serialize_splits(const SplitSet& splits);
SplitSet parse_splits(std::string_view json_text);

} // namespace skillstack
