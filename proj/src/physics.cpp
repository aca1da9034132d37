#include "skillstack/physics.hpp"

#include <cmath>

namespace skillstack {

namespace {

StackResponse to_response(const ResponseValues<double>& v) {
    return {v.refl, v.trans, {v.t0.re, v.t0.im}};
}

} // namespace

StackResponse solve_stack(const Stack& stack, double wavelength_um, double angle_deg,
                          Polarization pol) {
    return to_response(solve_stack_t(stack, wavelength_um, angle_deg, pol));
}

Stack assemble_stack(const PhysicalContext& ctx, const DesignSpace& ds,
                     const std::vector<double>& params) {
    return assemble_stack_t(ctx, ds, params);
}

ResponseSet solve_all(const PhysicalContext& ctx, const DesignSpace& ds,
                      const std::vector<double>& params) {
    const Stack stack = assemble_stack(ctx, ds, params);
    const auto sources = sources_of(ctx);
    ResponseSet set;
    set.n_sources = sources.size();
    set.flat.reserve(ctx.wavelengths_um.size() * sources.size());
    for (double wl : ctx.wavelengths_um)
        for (const Source& src : sources)
            set.flat.push_back(to_response(solve_stack_t(stack, wl, src.angle_deg, src.pol)));
    return set;
}

GradientBundle solve_with_gradient(const PhysicalContext& ctx, const DesignSpace& ds,
                                   const std::vector<double>& params,
                                   std::size_t wavelength_index, std::size_t source_index) {
    const auto sources = sources_of(ctx);
    const double wavelength = ctx.wavelengths_um.at(wavelength_index);
    const Source source = sources.at(source_index);

    GradientBundle bundle;
    bundle.d_by_param.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        std::vector<Dual> seeded(params.size());
        for (std::size_t i = 0; i < params.size(); ++i)
            seeded[i] = Dual(params[i], i == p ? 1.0 : 0.0);
        const auto stack = assemble_stack_t(ctx, ds, seeded);
        const auto resp = solve_stack_t(stack, Dual(wavelength), source.angle_deg, source.pol);
        if (p == 0) bundle.response = {resp.refl.v, resp.trans.v, {resp.t0.re.v, resp.t0.im.v}};
        const Dual phase = wrapped_phase_deg(resp.t0);
        ResponseGrad& g = bundle.d_by_param[p];
        g.dR = resp.refl.d;
        g.dT = resp.trans.d;
        g.d_phase_deg = phase.d;
        if (!std::isfinite(g.dR) || !std::isfinite(g.dT) || !std::isfinite(g.d_phase_deg))
            throw NonFiniteGradient("non-finite derivative for parameter " +
                                    ds.params[p].name);
    }
    return bundle;
}

} // namespace skillstack
