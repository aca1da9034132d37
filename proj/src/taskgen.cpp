#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include "skillstack/criteria.hpp"
#include "skillstack/physics.hpp"
#include "skillstack/rng.hpp"
#include "skillstack/task.hpp"

// Benchmark instance sampling. Every emitted task is certified feasible by a
// dense grid sweep of its own design space, and targets are set at grid
// quantiles so the feasible region is a controlled fraction of the space
// (hard enough that a midpoint start usually fails, soft enough that restarts
// plus a real step budget succeed).

namespace skillstack {

namespace {

constexpr int kMaxDrawAttempts = 64;

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof buf, f, args);
    va_end(args);
    return buf;
}

double floor4(double x) { return std::floor(x * 1e4) / 1e4; }
double ceil4(double x) { return std::ceil(x * 1e4) / 1e4; }

// value v such that at least `frac` of the entries are >= v
double desc_quantile(std::vector<double> vals, double frac) {
    std::sort(vals.begin(), vals.end(), std::greater<>());
    auto idx = static_cast<std::size_t>(std::floor(frac * static_cast<double>(vals.size())));
    if (idx >= vals.size()) idx = vals.size() - 1;
    return vals[idx];
}

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
    return v;
}

// all grid points of the design space at the given per-axis resolution
std::vector<std::vector<double>> grid_points(const DesignSpace& ds, const std::vector<int>& res) {
    std::vector<std::vector<double>> axes;
    for (std::size_t i = 0; i < ds.params.size(); ++i)
        axes.push_back(linspace(ds.params[i].lower_bound, ds.params[i].upper_bound, res[i]));
    std::vector<std::vector<double>> pts{{}};
    for (const auto& axis : axes) {
        std::vector<std::vector<double>> next;
        next.reserve(pts.size() * axis.size());
        for (const auto& p : pts)
            for (double x : axis) {
                auto q = p;
                q.push_back(x);
                next.push_back(std::move(q));
            }
        pts = std::move(next);
    }
    return pts;
}

std::vector<ResponseSet> eval_grid(const PhysicalContext& ctx, const DesignSpace& ds,
                                   const std::vector<std::vector<double>>& pts) {
    std::vector<ResponseSet> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(solve_all(ctx, ds, p));
    return out;
}

[[noreturn]] void infeasible(Family fam) {
    throw TaskParseError(TaskError::InfeasibleDraw,
                         fmt("no feasible draw for family %s after %d attempts",
                             std::string(family_name(fam)).c_str(), kMaxDrawAttempts));
}

Criterion refl_ge(int wl, int src, double target) {
    Criterion c;
    c.metric = Metric::TotalReflection;
    c.wavelength_index = wl;
    c.source_index = src;
    c.operation = CriterionOp::Ge;
    c.target = target;
    return c;
}

TaskSpec gen_g1(Rng& rng, int variant) {
    for (int attempt = 0; attempt < kMaxDrawAttempts; ++attempt) {
        TaskSpec t;
        t.family = Family::G1;
        const double wl = rng.uniform(0.55, 0.70);
        const double n1 = variant == 0 ? rng.uniform(4.6, 5.2) : rng.uniform(5.3, 6.0);
        const double ns = rng.uniform(1.30, 1.45);
        t.physical_context.wavelengths_um = {wl};
        t.physical_context.substrate_index = {ns, 0.0};
        t.physical_context.fixed_layer_indices = {{n1, 0.0}};
        t.design_space.params = {{"thickness_0", 0.01, 0.35, "um"}};
        std::vector<int> res{401};
        if (variant == 1) {
            // sibling template exposes the layer index as a second knob
            t.design_space.params.push_back({"index_0", 4.0, 6.2, "1"});
            res = {61, 61};
        }
        const auto pts = grid_points(t.design_space, res);
        const auto grid = eval_grid(t.physical_context, t.design_space, pts);
        std::vector<double> rs;
        rs.reserve(grid.size());
        for (const auto& g : grid) rs.push_back(g.at(0, 0).R);
        const double tau = floor4(desc_quantile(rs, 0.12));
        if (tau < (variant == 0 ? 0.60 : 0.65)) continue;
        t.criteria = {refl_ge(0, 0, tau)};
        t.query = fmt("Design a single-layer reflective stack at %.3f um. Use high-index layer "
                      "n=%.3f, k=0.000, substrate n=%.3f. Use TE polarization at normal incidence "
                      "and maximize total reflection efficiency.",
                      wl, n1, ns);
        t.reference = "10.1038/s42005-021-00568-6";
        return t;
    }
    infeasible(Family::G1);
}

TaskSpec gen_g2(Rng& rng, int variant) {
    for (int attempt = 0; attempt < kMaxDrawAttempts; ++attempt) {
        TaskSpec t;
        t.family = Family::G2;
        const double wl = rng.uniform(0.55, 0.70);
        const double n1 = variant == 0 ? rng.uniform(4.6, 5.2) : rng.uniform(5.3, 6.0);
        const double ns = rng.uniform(1.30, 1.45);
        const double theta2 = variant == 0 ? rng.uniform(5.0, 25.0) : rng.uniform(26.0, 40.0);
        t.physical_context.wavelengths_um = {wl};
        t.physical_context.incidence_angles_deg = {0.0, theta2};
        t.physical_context.substrate_index = {ns, 0.0};
        t.physical_context.fixed_layer_indices = {{n1, 0.0}};
        t.design_space.params = {{"thickness_0", 0.01, 0.35, "um"}};
        const auto pts = grid_points(t.design_space, {401});
        const auto grid = eval_grid(t.physical_context, t.design_space, pts);
        std::vector<double> worst;
        worst.reserve(grid.size());
        for (const auto& g : grid) worst.push_back(std::min(g.at(0, 0).R, g.at(0, 1).R));
        const double tau = floor4(desc_quantile(worst, 0.12));
        if (tau < 0.60) continue;
        t.criteria = {refl_ge(0, 0, tau), refl_ge(0, 1, tau)};
        t.query = fmt("Design a single-layer reflective stack at %.3f um for two angles (0 deg "
                      "and %.1f deg). Use high-index layer n=%.3f, substrate n=%.3f, and TE "
                      "polarization. Optimize the layer thickness so reflection stays high at "
                      "both angles.",
                      wl, theta2, n1, ns);
        t.reference = "10.1038/s42005-021-00568-6";
        return t;
    }
    infeasible(Family::G2);
}

TaskSpec gen_g3(Rng& rng, int variant) {
    for (int attempt = 0; attempt < kMaxDrawAttempts; ++attempt) {
        TaskSpec t;
        t.family = Family::G3;
        const double wl = rng.uniform(0.55, 0.70);
        const double n1 = variant == 0 ? rng.uniform(4.6, 5.2) : rng.uniform(5.3, 6.0);
        const double ns = rng.uniform(1.30, 1.45);
        const double theta = variant == 0 ? rng.uniform(55.0, 72.0) : rng.uniform(45.0, 54.0);
        t.physical_context.wavelengths_um = {wl};
        t.physical_context.incidence_angles_deg = {theta};
        t.physical_context.polarizations = {Polarization::TE, Polarization::TM};
        t.physical_context.substrate_index = {ns, 0.0};
        t.physical_context.fixed_layer_indices = {{n1, 0.0}};
        t.design_space.params = {{"thickness_0", 0.01, 0.35, "um"}};
        const auto pts = grid_points(t.design_space, {401});
        const auto grid = eval_grid(t.physical_context, t.design_space, pts);
        std::size_t best = 0;
        double best_contrast = -1.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double contrast = grid[i].at(0, 0).R - grid[i].at(0, 1).R;
            if (contrast > best_contrast) {
                best_contrast = contrast;
                best = i;
            }
        }
        const double r_te = grid[best].at(0, 0).R;
        const double r_tm = grid[best].at(0, 1).R;
        double tau_hi = 0.0, tau_lo = 0.0;
        bool ok = false;
        for (double slack : {0.02, 0.03, 0.05, 0.08}) {
            tau_hi = floor4(r_te - slack);
            tau_lo = ceil4(r_tm + slack);
            int feasible = 0;
            for (const auto& g : grid)
                if (g.at(0, 0).R >= tau_hi && g.at(0, 1).R <= tau_lo) ++feasible;
            if (feasible >= static_cast<int>(grid.size()) * 8 / 100) {
                ok = true;
                break;
            }
        }
        if (!ok || tau_hi < 0.50 || tau_lo > 0.40) continue;
        Criterion lo = refl_ge(0, 1, tau_lo);
        lo.operation = CriterionOp::Le;
        t.criteria = {refl_ge(0, 0, tau_hi), lo};
        t.query = fmt("Design a single-layer stack at %.3f um under %.1f deg incidence. Use "
                      "high-index layer n=%.3f, substrate n=%.3f. Optimize the thickness so TE "
                      "reflection is high while TM reflection is low.",
                      wl, theta, n1, ns);
        t.reference = "10.1038/s42005-021-00568-6";
        return t;
    }
    infeasible(Family::G3);
}

TaskSpec gen_g4(Rng& rng, int variant) {
    for (int attempt = 0; attempt < kMaxDrawAttempts; ++attempt) {
        TaskSpec t;
        t.family = Family::G4;
        const double wl0 = variant == 0 ? rng.uniform(0.52, 0.56) : rng.uniform(0.46, 0.50);
        const double wl1 = variant == 0 ? rng.uniform(0.60, 0.66) : rng.uniform(0.68, 0.74);
        const double n1 = rng.uniform(4.6, 6.0);
        const double ns = rng.uniform(1.30, 1.45);
        t.physical_context.wavelengths_um = {wl0, wl1};
        t.physical_context.substrate_index = {ns, 0.0};
        t.physical_context.fixed_layer_indices = {{n1, 0.0}};
        t.design_space.params = {{"thickness_0", 0.01, 0.35, "um"}};
        const auto pts = grid_points(t.design_space, {401});
        const auto grid = eval_grid(t.physical_context, t.design_space, pts);
        std::vector<double> worst;
        worst.reserve(grid.size());
        for (const auto& g : grid) worst.push_back(std::min(g.at(0, 0).R, g.at(1, 0).R));
        const double tau = floor4(desc_quantile(worst, 0.12));
        if (tau < 0.55) continue;
        t.criteria = {refl_ge(0, 0, tau), refl_ge(1, 0, tau)};
        t.criteria[1].wavelength_index = 1;
        t.query = fmt("Design a reflective stack jointly for %.3f um and %.3f um. Use high-index "
                      "layer n=%.3f, substrate n=%.3f, and TE polarization at normal incidence. "
                      "Optimize the thickness so reflection is high at both wavelengths.",
                      wl0, wl1, n1, ns);
        t.reference = "10.1038/s42005-021-00568-6";
        return t;
    }
    infeasible(Family::G4);
}

TaskSpec gen_g5(Rng& rng, int variant) {
    for (int attempt = 0; attempt < kMaxDrawAttempts; ++attempt) {
        TaskSpec t;
        t.family = Family::G5;
        const double wl = rng.uniform(0.55, 0.70);
        const double nr = rng.uniform(0.8, 1.6);
        const double k = variant == 0 ? rng.uniform(5.5, 8.0) : rng.uniform(4.0, 5.4);
        const double ns = rng.uniform(1.30, 1.45);
        t.physical_context.wavelengths_um = {wl};
        t.physical_context.substrate_index = {ns, 0.0};
        t.physical_context.fixed_layer_indices = {{nr, k}};
        // deliberately thin range: reflectance still climbs with thickness here
        t.design_space.params = {{"thickness_0", 0.0005, 0.025, "um"}};
        const auto pts = grid_points(t.design_space, {401});
        const auto grid = eval_grid(t.physical_context, t.design_space, pts);
        std::vector<double> rs;
        rs.reserve(grid.size());
        for (const auto& g : grid) rs.push_back(g.at(0, 0).R);
        const double tau = floor4(desc_quantile(rs, 0.15));
        if (tau < 0.50) continue;
        t.criteria = {refl_ge(0, 0, tau)};
        t.query = fmt("Design a plasmonic reflective stack at %.3f um. Use metallic layer "
                      "n=%.4f, k=%.4f, and substrate n=%.3f. Use TE polarization at normal "
                      "incidence and maximize total reflection efficiency.",
                      wl, nr, k, ns);
        t.reference = "10.1038/s42005-021-00568-6";
        return t;
    }
    infeasible(Family::G5);
}

TaskSpec gen_phase_family(Family fam, Rng& rng, int variant) {
    const bool aux = fam == Family::Gaux;
    for (int attempt = 0; attempt < kMaxDrawAttempts; ++attempt) {
        TaskSpec t;
        t.family = fam;
        const double wl = rng.uniform(5.0, 5.4);
        const double n_in = rng.uniform(1.40, 1.50);
        t.physical_context.wavelengths_um = {wl};
        t.physical_context.superstrate_index = {n_in, 0.0}; // light enters from the dense side
        t.physical_context.substrate_index = {1.0, 0.0};
        std::string component;
        if (aux || variant == 1) {
            t.physical_context.polarizations = {Polarization::TE};
            component = "y";
        } else {
            t.physical_context.polarizations = {Polarization::TM};
            component = "x";
        }
        std::vector<int> res;
        if (aux) {
            t.physical_context.fixed_layer_indices = {{rng.uniform(4.2, 4.6), 0.0},
                                                      {rng.uniform(4.8, 5.2), 0.010},
                                                      {rng.uniform(5.4, 5.8), 0.0}};
            t.design_space.params = {{"thickness_0", 0.05, 0.45, "um"},
                                     {"thickness_1", 0.05, 0.45, "um"},
                                     {"thickness_2", 0.05, 0.45, "um"}};
            res = {17, 17, 17};
        } else {
            t.physical_context.fixed_layer_indices = {{rng.uniform(4.3, 4.7), 0.0},
                                                      {rng.uniform(5.0, 5.9), 0.010}};
            t.design_space.params = {{"thickness_0", 0.05, 0.60, "um"},
                                     {"thickness_1", 0.05, 0.60, "um"}};
            res = {61, 61};
        }
        const auto pts = grid_points(t.design_space, res);
        const auto grid = eval_grid(t.physical_context, t.design_space, pts);

        std::vector<double> ts(grid.size()), phases(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            ts[i] = grid[i].at(0, 0).T;
            phases[i] = phase_deg(grid[i].at(0, 0).t0);
        }
        const double t_median = desc_quantile(ts, 0.5);
        std::vector<std::size_t> anchors;
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (ts[i] >= t_median) anchors.push_back(i);
        const std::size_t anchor = anchors[rng.below(anchors.size())];
        const double phi = floor4(phases[anchor]);

        double eps_raw = aux ? rng.uniform(3.0, 6.0)
                             : (variant == 0 ? rng.uniform(4.0, 10.0) : rng.uniform(2.0, 4.0));
        double eps = std::floor(eps_raw * 10.0) / 10.0;
        std::vector<double> t_near;
        for (int widen = 0; widen < 2; ++widen) {
            t_near.clear();
            for (std::size_t i = 0; i < grid.size(); ++i)
                if (cyclic_distance_deg(phases[i], phi) <= eps) t_near.push_back(ts[i]);
            if (t_near.size() * 100 >= grid.size() * 3) break;
            eps = std::floor(eps * 15.0) / 10.0; // one widening pass, then give up
        }
        if (t_near.size() * 100 < grid.size() * 3) continue;
        const double tau_t = floor4(desc_quantile(t_near, 0.5));
        if (tau_t < 0.30) continue;

        Criterion ct;
        ct.metric = Metric::TotalTransmission;
        ct.operation = CriterionOp::Ge;
        ct.target = tau_t;
        Criterion cp;
        cp.metric = Metric::ZeroOrderTransmissionPhaseDeg;
        cp.operation = CriterionOp::CloseTo;
        cp.target = phi;
        cp.tolerance = eps;
        cp.component = component;
        t.criteria = {ct, cp};
        const char* layer_story = aux ? "three stacked high-index layers"
                                      : "two stacked high-index layers (top and bottom halves)";
        t.query = fmt("Design a transmissive unit cell at %.3f um built from %s on a n=%.3f "
                      "incidence medium, exiting to air. Optimize layer thicknesses to exceed "
                      "%.4f total transmission and reach a transmitted %s phase of %.4f degrees "
                      "with phase error < %.1f degrees.",
                      wl, layer_story, n_in, tau_t, component == "x" ? "TM" : "TE", phi, eps);
        t.reference = "10.1515/nanoph-2025-0507";
        return t;
    }
    infeasible(fam);
}

} // namespace

TaskSpec generate_family_instance(Family family, Rng& rng, int variant) {
    TaskSpec t;
    switch (family) {
    case Family::G1: t = gen_g1(rng, variant); break;
    case Family::G2: t = gen_g2(rng, variant); break;
    case Family::G3: t = gen_g3(rng, variant); break;
    case Family::G4: t = gen_g4(rng, variant); break;
    case Family::G5: t = gen_g5(rng, variant); break;
    case Family::G6: t = gen_phase_family(Family::G6, rng, variant); break;
    case Family::Gaux: t = gen_phase_family(Family::Gaux, rng, 0); break;
    }
    // default identity: content hash (split assembly overwrites it with a
    // structured id); re-parsing validates the instance before it escapes
    t.task_id = "";
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(serialize_task(t))));
    t.task_id = std::string("t") + buf;
    return parse_task(serialize_task(t));
}

namespace {

std::string split_task_id(std::string_view setting, const char* split, Family fam, int variant,
                          int ordinal) {
    std::string f(family_name(fam));
    for (char& ch : f) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    std::string s(setting);
    for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    const char* sibling = fam == Family::Gaux ? "" : (variant == 0 ? "a" : "b");
    return fmt("%s-%s-%s%s-%02d", s.c_str(), split, f.c_str(), sibling, ordinal);
}

} // namespace

SplitSet build_splits(std::string_view setting, std::uint64_t seed) {
    if (setting != "IID" && setting != "OOD")
        throw TaskParseError(TaskError::BadValue, "setting must be IID or OOD");
    SplitSet out;
    out.setting = std::string(setting);
    out.seed = seed;

    auto make = [&](const char* split, Family fam, int variant, int ordinal) {
        const std::string tag = std::string(setting) + "/" + split + "/" +
                                std::string(family_name(fam)) + (variant == 0 ? "a" : "b");
        Rng rng(derive_seed(seed, tag, static_cast<std::uint64_t>(ordinal)));
        TaskSpec t = generate_family_instance(fam, rng, variant);
        t.task_id = split_task_id(setting, split, fam, variant, ordinal);
        return t;
    };

    if (setting == "IID") {
        const Family trains[] = {Family::G1, Family::G2, Family::G3,
                                 Family::G4, Family::G5, Family::G6};
        const int counts[] = {9, 9, 8, 8, 8, 8}; // 50 over 6 templates, extras to the lowest two
        for (int f = 0; f < 6; ++f)
            for (int i = 0; i < counts[f]; ++i) out.train.push_back(make("train", trains[f], 0, i));
        for (int i = 0; i < 8; ++i) out.validation.push_back(make("val", Family::G1, 1, i));
        for (int i = 0; i < 7; ++i) out.validation.push_back(make("val", Family::Gaux, 0, i));
        const Family tests[] = {Family::G2, Family::G3, Family::G4, Family::G5, Family::G6};
        for (int f = 0; f < 5; ++f)
            for (int i = 0; i < 10; ++i) out.test.push_back(make("test", tests[f], 1, i));
    } else {
        const Family trains[] = {Family::G1, Family::G2, Family::G3};
        const int counts[] = {17, 17, 16};
        for (int f = 0; f < 3; ++f)
            for (int i = 0; i < counts[f]; ++i)
                out.train.push_back(make("train", trains[f], i % 2, i));
        for (int i = 0; i < 15; ++i) out.validation.push_back(make("val", Family::G4, i % 2, i));
        for (int i = 0; i < 17; ++i) out.test.push_back(make("test", Family::G5, i % 2, i));
        for (int i = 0; i < 17; ++i) out.test.push_back(make("test", Family::G6, i % 2, i));
        for (int i = 0; i < 16; ++i) out.test.push_back(make("test", Family::Gaux, 0, i));
    }
    return out;
}

} // namespace skillstack
