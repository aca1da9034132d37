#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "skillstack/physics.hpp"
#include "skillstack/rng.hpp"

using namespace skillstack;

namespace {

Stack bare_interface(double n_in, double n_out) {
    Stack s;
    s.superstrate_index = {n_in, 0.0};
    s.substrate_index = {n_out, 0.0};
    return s;
}

Stack random_lossless_stack(Rng& rng, int max_layers = 4) {
    Stack s;
    s.superstrate_index = {1.0, 0.0};
    s.substrate_index = {rng.uniform(1.1, 2.2), 0.0};
    const int n_layers = 1 + static_cast<int>(rng.below(max_layers));
    for (int i = 0; i < n_layers; ++i)
        s.layers.push_back({{rng.uniform(1.2, 6.0), 0.0}, rng.uniform(0.005, 0.5)});
    return s;
}

} // namespace

TEST_CASE("free space is the identity") {
    const auto r = solve_stack(bare_interface(1.0, 1.0), 0.632, 0.0, Polarization::TE);
    CHECK(r.R == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(r.T == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("normal-incidence Fresnel reflection at 1 -> 1.5") {
    for (auto pol : {Polarization::TE, Polarization::TM}) {
        const auto r = solve_stack(bare_interface(1.0, 1.5), 0.632, 0.0, pol);
        CHECK(std::fabs(r.R - 0.04) < 1e-12);
        CHECK(std::fabs(r.T - 0.96) < 1e-12);
    }
}

TEST_CASE("oblique Fresnel matches the textbook formulas") {
    // independent transcription: n1 sin(t1) = n2 sin(t2)
    const double n1 = 1.0, n2 = 1.5, theta = 45.0;
    const double t1 = theta * kPi / 180.0;
    const double t2 = std::asin(n1 * std::sin(t1) / n2);
    const double rs = (n1 * std::cos(t1) - n2 * std::cos(t2)) / (n1 * std::cos(t1) + n2 * std::cos(t2));
    const double rp = (n2 * std::cos(t1) - n1 * std::cos(t2)) / (n2 * std::cos(t1) + n1 * std::cos(t2));

    const auto te = solve_stack(bare_interface(n1, n2), 0.632, theta, Polarization::TE);
    const auto tm = solve_stack(bare_interface(n1, n2), 0.632, theta, Polarization::TM);
    CHECK(te.R == doctest::Approx(rs * rs).epsilon(1e-12));
    CHECK(tm.R == doctest::Approx(rp * rp).epsilon(1e-12));
    CHECK(te.R + te.T == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(tm.R + tm.T == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("quarter-wave antireflection coating") {
    const double wavelength = 0.55;
    const double n1 = std::sqrt(1.5);
    Stack s = bare_interface(1.0, 1.5);
    s.layers.push_back({{n1, 0.0}, wavelength / (4.0 * n1)});
    const auto r = solve_stack(s, wavelength, 0.0, Polarization::TE);
    CHECK(r.R < 1e-10);
}

TEST_CASE("energy conservation over 1000 random lossless stacks") {
    Rng rng(2024);
    for (int i = 0; i < 1000; ++i) {
        const Stack s = random_lossless_stack(rng);
        const double wl = rng.uniform(0.4, 6.0);
        const double angle = rng.uniform(0.0, 89.0);
        const auto pol = rng.below(2) == 0 ? Polarization::TE : Polarization::TM;
        const auto r = solve_stack(s, wl, angle, pol);
        CHECK(std::fabs(r.R + r.T - 1.0) < 1e-10);
        CHECK(r.R >= 0.0);
        CHECK(r.T >= 0.0);
    }
}

TEST_CASE("TE and TM are degenerate at normal incidence") {
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        const Stack s = random_lossless_stack(rng);
        const double wl = rng.uniform(0.4, 6.0);
        const auto te = solve_stack(s, wl, 0.0, Polarization::TE);
        const auto tm = solve_stack(s, wl, 0.0, Polarization::TM);
        CHECK(std::fabs(te.R - tm.R) < 1e-12);
        CHECK(std::fabs(te.T - tm.T) < 1e-12);
    }
}

TEST_CASE("absorbing layers dissipate power") {
    Rng rng(99);
    for (int i = 0; i < 200; ++i) {
        Stack s = random_lossless_stack(rng);
        s.layers[0].index.im = rng.uniform(0.05, 2.0);
        const auto r = solve_stack(s, rng.uniform(0.4, 2.0), rng.uniform(0.0, 60.0),
                                   Polarization::TE);
        CHECK(r.R + r.T < 1.0);
        CHECK(r.R + r.T >= 0.0);
    }
}

TEST_CASE("transmittance is reciprocal for lossless stacks") {
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
        Stack fwd = random_lossless_stack(rng);
        fwd.superstrate_index = {rng.uniform(1.0, 1.8), 0.0};
        Stack rev;
        rev.superstrate_index = fwd.substrate_index;
        rev.substrate_index = fwd.superstrate_index;
        rev.layers.assign(fwd.layers.rbegin(), fwd.layers.rend());
        const double wl = rng.uniform(0.5, 3.0);
        const auto a = solve_stack(fwd, wl, 0.0, Polarization::TE);
        const auto b = solve_stack(rev, wl, 0.0, Polarization::TE);
        CHECK(std::fabs(a.T - b.T) < 1e-10);
    }
}

TEST_CASE("|t0| is symmetric under stack reversal with equal bounding media") {
    Rng rng(32);
    for (int i = 0; i < 100; ++i) {
        Stack fwd = random_lossless_stack(rng);
        fwd.substrate_index = fwd.superstrate_index = {rng.uniform(1.0, 1.6), 0.0};
        Stack rev = fwd;
        rev.layers.assign(fwd.layers.rbegin(), fwd.layers.rend());
        const double wl = rng.uniform(0.5, 3.0);
        const double angle = rng.uniform(0.0, 40.0);
        const auto a = solve_stack(fwd, wl, angle, Polarization::TE);
        const auto b = solve_stack(rev, wl, angle, Polarization::TE);
        CHECK(std::abs(std::abs(a.t0) - std::abs(b.t0)) < 1e-10);
    }
}

TEST_CASE("total internal reflection is signaled, not silently zeroed") {
    Stack s = bare_interface(1.5, 1.0);
    CHECK_THROWS_AS((void)solve_stack(s, 0.632, 60.0, Polarization::TE), EvanescentSubstrate);
    // below the critical angle it solves fine
    const auto r = solve_stack(s, 0.632, 30.0, Polarization::TE);
    CHECK(std::fabs(r.R + r.T - 1.0) < 1e-10);
}

TEST_CASE("transmitted phase lies in [0, 360) and grows linearly in a uniform medium") {
    // all media share one index: t0 is pure propagation, slope 360 n / lambda
    const double n = 1.7, wl = 0.8;
    Stack s = bare_interface(n, n);
    s.layers.push_back({{n, 0.0}, 0.0});
    double prev = 0.0;
    for (int i = 0; i <= 20; ++i) {
        const double d = 0.01 * i;
        s.layers[0].thickness_um = d;
        const auto r = solve_stack(s, wl, 0.0, Polarization::TE);
        const double phase = phase_deg(r.t0);
        CHECK(phase >= 0.0);
        CHECK(phase < 360.0);
        const double expected = std::fmod(360.0 * n * d / wl, 360.0);
        CHECK(phase == doctest::Approx(expected).epsilon(1e-9));
        if (i > 0) CHECK(phase != prev);
        prev = phase;
    }
}

TEST_CASE("zero-thickness layers are optically absent") {
    Stack with = bare_interface(1.0, 1.5);
    with.layers.push_back({{3.2, 0.0}, 0.0});
    const auto a = solve_stack(with, 0.632, 17.0, Polarization::TM);
    const auto b = solve_stack(bare_interface(1.0, 1.5), 0.632, 17.0, Polarization::TM);
    CHECK(a.R == doctest::Approx(b.R).epsilon(1e-14));
    CHECK(std::abs(a.t0 - b.t0) < 1e-14);

    CHECK_THROWS_AS((void)solve_stack(Stack{{1.0, 0.0}, {{{2.0, 0.0}, -0.1}}, {1.5, 0.0}},
                                      0.632, 0.0, Polarization::TE),
                    SolverError);
}

namespace {

// independent gradient oracle: central differences of the plain solver
ResponseGrad fd_grad(const PhysicalContext& ctx, const DesignSpace& ds,
                     std::vector<double> params, std::size_t p, std::size_t wl, std::size_t src) {
    const double h = 1e-6 * (ds.params[p].upper_bound - ds.params[p].lower_bound);
    auto probe = [&](double x) {
        auto q = params;
        q[p] = x;
        return solve_all(ctx, ds, q).at(wl, src);
    };
    const auto hi = probe(params[p] + h);
    const auto lo = probe(params[p] - h);
    ResponseGrad g;
    g.dR = (hi.R - lo.R) / (2.0 * h);
    g.dT = (hi.T - lo.T) / (2.0 * h);
    double dphi = phase_deg(hi.t0) - phase_deg(lo.t0);
    dphi -= 360.0 * std::floor(dphi / 360.0 + 0.5); // wrap to (-180, 180]
    g.d_phase_deg = dphi / (2.0 * h);
    return g;
}

bool close_rel(double got, double want, double tol) {
    const double scale = std::max({std::fabs(got), std::fabs(want), 1e-8});
    return std::fabs(got - want) / scale < tol;
}

} // namespace

TEST_CASE("dual-number gradients match finite differences at 120 random points") {
    Rng rng(515);
    int checked = 0;
    while (checked < 120) {
        PhysicalContext ctx;
        ctx.wavelengths_um = {rng.uniform(0.5, 2.0)};
        ctx.incidence_angles_deg = {rng.uniform(0.0, 50.0)};
        ctx.polarizations = {rng.below(2) == 0 ? Polarization::TE : Polarization::TM};
        ctx.substrate_index = {rng.uniform(1.1, 1.8), 0.0};
        const int n_layers = 1 + static_cast<int>(rng.below(2));
        DesignSpace ds;
        for (int i = 0; i < n_layers; ++i) {
            ctx.fixed_layer_indices.push_back({rng.uniform(1.4, 5.5), 0.0});
            ds.params.push_back({"thickness_" + std::to_string(i), 0.01, 0.45, "um"});
        }
        // exercise the index-parameter path on some draws
        if (rng.below(3) == 0) ds.params.push_back({"index_0", 1.4, 5.5, "1"});
        std::vector<double> params;
        for (const auto& p : ds.params)
            params.push_back(rng.uniform(p.lower_bound + 0.05 * (p.upper_bound - p.lower_bound),
                                         p.upper_bound - 0.05 * (p.upper_bound - p.lower_bound)));
        const auto bundle = solve_with_gradient(ctx, ds, params, 0, 0);
        bool degenerate = false;
        for (std::size_t p = 0; p < params.size(); ++p) {
            const auto fd = fd_grad(ctx, ds, params, p, 0, 0);
            // skip points where the finite difference itself is unstable
            if (std::fabs(fd.dR) < 1e-7 || std::fabs(fd.dT) < 1e-7) {
                degenerate = true;
                break;
            }
            CHECK(close_rel(bundle.d_by_param[p].dR, fd.dR, 1e-4));
            CHECK(close_rel(bundle.d_by_param[p].dT, fd.dT, 1e-4));
            if (std::fabs(fd.d_phase_deg) > 1e-4)
                CHECK(close_rel(bundle.d_by_param[p].d_phase_deg, fd.d_phase_deg, 1e-4));
        }
        if (!degenerate) ++checked;
    }
}

TEST_CASE("gradient of an absent layer's index is zero") {
    PhysicalContext ctx;
    ctx.wavelengths_um = {0.7};
    ctx.substrate_index = {1.5, 0.0};
    ctx.fixed_layer_indices = {{1.0, 0.0}};
    DesignSpace ds;
    ds.params = {{"thickness_0", 0.0, 0.4, "um"}, {"index_0", 1.0, 4.0, "1"}};
    // thickness at the lower bound and layer index equal to the superstrate
    const auto bundle = solve_with_gradient(ctx, ds, {0.0, 1.0}, 0, 0);
    CHECK(bundle.d_by_param[1].dR == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(bundle.d_by_param[1].dT == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("assemble_stack maps named parameters onto layers") {
    PhysicalContext ctx;
    ctx.wavelengths_um = {1.0};
    ctx.substrate_index = {1.5, 0.0};
    ctx.fixed_layer_indices = {{2.0, 0.0}, {3.0, 0.1}};
    DesignSpace ds;
    ds.params = {{"thickness_0", 0.0, 1.0, "um"},
                 {"thickness_1", 0.0, 1.0, "um"},
                 {"index_1", 2.5, 4.0, "1"}};
    const Stack s = assemble_stack(ctx, ds, {0.2, 0.3, 3.7});
    REQUIRE(s.layers.size() == 2);
    CHECK(s.layers[0].thickness_um == 0.2);
    CHECK(s.layers[0].index.re == 2.0);
    CHECK(s.layers[0].index.im == 0.0);
    CHECK(s.layers[1].thickness_um == 0.3);
    CHECK(s.layers[1].index.re == 3.7);
    CHECK(s.layers[1].index.im == 0.1); // imaginary part comes from the context

    CHECK_THROWS_AS((void)assemble_stack(ctx, ds, {0.2, 0.3}), SolverError);
    DesignSpace missing;
    missing.params = {{"thickness_0", 0.0, 1.0, "um"}};
    CHECK_THROWS_AS((void)assemble_stack(ctx, missing, {0.2}), SolverError);
}

TEST_CASE("solve_all indexes responses wavelength-major") {
    PhysicalContext ctx;
    ctx.wavelengths_um = {0.6, 0.8};
    ctx.incidence_angles_deg = {0.0, 20.0};
    ctx.substrate_index = {1.4, 0.0};
    ctx.fixed_layer_indices = {{2.2, 0.0}};
    DesignSpace ds;
    ds.params = {{"thickness_0", 0.0, 1.0, "um"}};
    const auto set = solve_all(ctx, ds, {0.15});
    CHECK(set.n_sources == 2);
    CHECK(set.flat.size() == 4);
    const Stack s = assemble_stack(ctx, ds, {0.15});
    CHECK(set.at(1, 1) == solve_stack(s, 0.8, 20.0, Polarization::TE));
    CHECK(set.at(0, 0) == solve_stack(s, 0.6, 0.0, Polarization::TE));
}
