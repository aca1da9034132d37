#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "skillstack/dual.hpp"
#include "skillstack/task.hpp"

namespace skillstack {

inline constexpr double kPi = 3.14159265358979323846;

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// total internal reflection into a lossless substrate: no propagating
// transmitted wave, so T is signaled rather than silently reported as 0
struct EvanescentSubstrate : SolverError {
    using SolverError::SolverError;
};
struct NonFiniteGradient : SolverError {
    using SolverError::SolverError;
};

template <class S>
struct LayerT {
    Cx<S> index{};
    S thickness_um{};
};

template <class S>
struct StackT {
    Cx<S> superstrate_index;
    std::vector<LayerT<S>> layers;
    Cx<S> substrate_index;
};

using Layer = LayerT<double>;
using Stack = StackT<double>;

// scalar-generic response triple used by the differentiable path
template <class S>
struct ResponseValues {
    S refl;
    S trans;
    Cx<S> t0;
};

struct StackResponse {
    double R = 0.0;
    double T = 0.0;
    std::complex<double> t0{0.0, 0.0};

    bool operator==(const StackResponse&) const = default;
};

// transmitted phase in degrees, wrapped to [0, 360)
template <class S>
S wrapped_phase_deg(Cx<S> t0) {
    using std::atan2;
    using std::floor;
    S deg = atan2(t0.im, t0.re) * S(180.0 / kPi);
    deg = deg - S(360.0) * floor(deg / S(360.0));
    if (value_of(deg) >= 360.0) deg = deg - S(360.0); // rounding at the seam
    return deg;
}

inline double phase_deg(std::complex<double> t0) {
    return wrapped_phase_deg(Cx<double>{t0.real(), t0.imag()});
}

namespace detail {

template <class S>
struct Mat2 {
    Cx<S> m00, m01, m10, m11;
};

template <class S>
Mat2<S> mul(const Mat2<S>& a, const Mat2<S>& b) {
    return {a.m00 * b.m00 + a.m01 * b.m10, a.m00 * b.m01 + a.m01 * b.m11,
            a.m10 * b.m00 + a.m11 * b.m10, a.m10 * b.m01 + a.m11 * b.m11};
}

} // namespace detail

// Transfer-matrix solve of one plane wave through the stack. Fields carry the
// e^{i(kz - wt)} convention; layer cosines take the branch with Im(n cos) >= 0
// so evanescent and absorbed waves decay along +z.
template <class S>
ResponseValues<S> solve_stack_t(const StackT<S>& stack, S wavelength_um, double angle_deg,
                                Polarization pol) {
    using std::sin;
    if (!(angle_deg >= 0.0 && angle_deg < 90.0))
        throw SolverError("incidence angle must lie in [0, 90)");
    if (!(value_of(wavelength_um) > 0.0)) throw SolverError("wavelength must be positive");
    if (value_of(stack.superstrate_index.im) != 0.0)
        throw SolverError("absorbing superstrate: incident power is undefined");
    for (const auto& layer : stack.layers)
        if (value_of(layer.thickness_um) < 0.0) throw SolverError("negative layer thickness");

    const std::size_t n_media = stack.layers.size() + 2;
    std::vector<Cx<S>> n(n_media);
    n[0] = stack.superstrate_index;
    for (std::size_t i = 0; i < stack.layers.size(); ++i) n[i + 1] = stack.layers[i].index;
    n[n_media - 1] = stack.substrate_index;

    const S alpha = n[0].re * S(std::sin(angle_deg * kPi / 180.0));

    // total internal reflection is detectable exactly from the inputs
    if (value_of(n.back().im) == 0.0 && value_of(alpha) >= value_of(n.back().re))
        throw EvanescentSubstrate("no propagating transmitted wave in the substrate");

    std::vector<Cx<S>> cosv(n_media);
    for (std::size_t j = 0; j < n_media; ++j) {
        const Cx<S> s = Cx<S>(alpha) / n[j];
        Cx<S> c = sqrt(Cx<S>(S(1.0)) - s * s);
        const Cx<S> nc = n[j] * c;
        if (value_of(nc.im) < 0.0 || (value_of(nc.im) == 0.0 && value_of(nc.re) < 0.0)) c = -c;
        cosv[j] = c;
    }

    auto interface = [&](std::size_t j, std::size_t k) -> detail::Mat2<S> {
        const Cx<S> a = n[j] * cosv[j];
        Cx<S> r, t;
        if (pol == Polarization::TE) {
            const Cx<S> b = n[k] * cosv[k];
            r = (a - b) / (a + b);
            t = (S(2.0) * a) / (a + b);
        } else {
            const Cx<S> num = n[k] * cosv[j] - n[j] * cosv[k];
            const Cx<S> den = n[k] * cosv[j] + n[j] * cosv[k];
            r = num / den;
            t = (S(2.0) * a) / den;
        }
        // I_{jk} = (1/t) [[1, r], [r, 1]]
        const Cx<S> inv_t = Cx<S>(S(1.0)) / t;
        return {inv_t, r * inv_t, r * inv_t, inv_t};
    };

    const S k0 = S(2.0 * kPi) / wavelength_um;
    detail::Mat2<S> m = interface(0, 1);
    for (std::size_t i = 0; i < stack.layers.size(); ++i) {
        const Cx<S> delta = (k0 * stack.layers[i].thickness_um) * (n[i + 1] * cosv[i + 1]);
        const Cx<S> fwd = exp(Cx<S>(delta.im, -delta.re));  // e^{-i delta}
        const Cx<S> bwd = exp(Cx<S>(-delta.im, delta.re));  // e^{+i delta}
        const detail::Mat2<S> prop{fwd, Cx<S>(), Cx<S>(), bwd};
        m = detail::mul(m, detail::mul(prop, interface(i + 1, i + 2)));
    }

    const Cx<S> r = m.m10 / m.m00;
    const Cx<S> t = Cx<S>(S(1.0)) / m.m00;

    ResponseValues<S> out;
    out.refl = abs_sq(r);
    out.t0 = t;
    if (pol == Polarization::TE) {
        const S num = (n.back() * cosv.back()).re;
        const S den = (n[0] * cosv[0]).re;
        out.trans = abs_sq(t) * num / den;
    } else {
        const S num = (n.back() * conj(cosv.back())).re;
        const S den = (n[0] * conj(cosv[0])).re;
        out.trans = abs_sq(t) * num / den;
    }
    return out;
}

StackResponse solve_stack(const Stack& stack, double wavelength_um, double angle_deg,
                          Polarization pol);

// Builds the stack the design parameters describe: "thickness_<j>" sets layer
// j's thickness, "index_<j>" replaces the real part of layer j's index.
template <class S>
StackT<S> assemble_stack_t(const PhysicalContext& ctx, const DesignSpace& ds,
                           const std::vector<S>& params) {
    if (params.size() != ds.params.size())
        throw SolverError("parameter vector length does not match the design space");
    StackT<S> st;
    st.superstrate_index = {S(ctx.superstrate_index.real()), S(ctx.superstrate_index.imag())};
    st.substrate_index = {S(ctx.substrate_index.real()), S(ctx.substrate_index.imag())};
    st.layers.resize(ctx.fixed_layer_indices.size());
    std::vector<bool> has_thickness(st.layers.size(), false);
    for (std::size_t i = 0; i < st.layers.size(); ++i)
        st.layers[i].index = {S(ctx.fixed_layer_indices[i].real()),
                              S(ctx.fixed_layer_indices[i].imag())};
    for (std::size_t i = 0; i < ds.params.size(); ++i) {
        const auto [is_thickness, layer] = parse_param_name(ds.params[i].name);
        if (static_cast<std::size_t>(layer) >= st.layers.size())
            throw SolverError("design parameter '" + ds.params[i].name +
                              "' addresses a nonexistent layer");
        if (is_thickness) {
            st.layers[layer].thickness_um = params[i];
            has_thickness[layer] = true;
        } else {
            st.layers[layer].index.re = params[i];
        }
    }
    for (std::size_t i = 0; i < has_thickness.size(); ++i)
        if (!has_thickness[i])
            throw SolverError("layer " + std::to_string(i) + " has no thickness parameter");
    return st;
}

Stack assemble_stack(const PhysicalContext& ctx, const DesignSpace& ds,
                     const std::vector<double>& params);

// Responses for every (wavelength, source) pair, wavelength-major.
struct ResponseSet {
    std::size_t n_sources = 0;
    std::vector<StackResponse> flat;

    const StackResponse& at(std::size_t wavelength_index, std::size_t source_index) const {
        return flat.at(wavelength_index * n_sources + source_index);
    }
    bool operator==(const ResponseSet&) const = default;
};

ResponseSet solve_all(const PhysicalContext& ctx, const DesignSpace& ds,
                      const std::vector<double>& params);

struct ResponseGrad {
    double dR = 0.0;
    double dT = 0.0;
    double d_phase_deg = 0.0;
};

struct GradientBundle {
    StackResponse response;
    std::vector<ResponseGrad> d_by_param;
};

GradientBundle solve_with_gradient(const PhysicalContext& ctx, const DesignSpace& ds,
                                   const std::vector<double>& params,
                                   std::size_t wavelength_index, std::size_t source_index);

} // namespace skillstack
