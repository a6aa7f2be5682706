#pragma once

// Lifting-line propeller design solver.
//
// Given an operating requirement (thrust, ship speed, rpm) and a blade
// geometry, find the bound-circulation distribution that minimizes shaft
// torque while delivering the required thrust, i.e. minimize
//
//     H = Q + lambda1 * (T - Ts)
//
// over the station circulations and the multiplier. Induced velocities use a
// local helical-sheet closure: the tangential component follows from the
// shed circulation with a Prandtl tip/hub loss factor, and the axial
// component from the requirement that the induced velocity be normal to the
// local relative flow. Tangential induction is signed against the rotation,
// so the relative tangential speed at a section is omega*r + u_t < omega*r.
//
// The nonlinear system is solved by a frozen-coefficient outer iteration.
// With the inflow angles (and therefore the loss factors and the induction
// coefficients) held fixed, H separates into one scalar function per station,
// each minimized exactly for a trial multiplier; the multiplier is then found
// by a bracketed root-find on the thrust constraint. The angles are thawed,
// the circulation is relaxed, and the process repeats.

#include "propsao/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace propsao {

inline constexpr double kSeawaterDensity = 1025.0; // kg/m^3

/// Operating demand: required thrust [N], ship speed (axial inflow) [m/s], shaft speed [rev/min].
struct Requirement {
    double thrust_req = 0.0;
    double ship_speed = 0.0;
    double rpm = 0.0;

    double omega() const noexcept { return 2.0 * kPi * rpm / 60.0; }
    double revs_per_second() const noexcept { return rpm / 60.0; }

    void validate() const
    {
        if (!(thrust_req > 0.0) || !(ship_speed > 0.0) || !(rpm > 0.0) || !std::isfinite(thrust_req)
            || !std::isfinite(ship_speed) || !std::isfinite(rpm))
            throw ConfigError("requirement must have positive finite thrust, speed and rpm");
    }

    friend bool operator==(const Requirement&, const Requirement&) = default;
};

/// Physical blade design. Chord at normalized station x in (0,1) is
///     c/D = chord_root * (1 - x^2)^(taper_exp / 2).
struct BladeGeometry {
    int blade_count = 4;
    double diameter = 1.0;     // m
    double hub_diameter = 0.2; // m
    double chord_root = 0.15;  // peak c/D
    double taper_exp = 1.0;
    double section_drag_coeff = 0.008;

    double tip_radius() const noexcept { return 0.5 * diameter; }
    double hub_radius() const noexcept { return 0.5 * hub_diameter; }

    double chord_over_diameter(double x) const noexcept
    {
        return chord_root * std::pow(std::max(0.0, 1.0 - x * x), 0.5 * taper_exp);
    }

    void validate() const
    {
        if (blade_count < 3 || blade_count > 6)
            throw GeometryError("blade count must be in {3,4,5,6}, got " + std::to_string(blade_count));
        if (!(diameter > 0.0) || !std::isfinite(diameter))
            throw GeometryError("diameter must be positive");
        if (!(hub_diameter > 0.0) || !(hub_diameter < diameter))
            throw GeometryError("hub diameter must lie in (0, diameter)");
        if (!(chord_root >= 0.02 && chord_root <= 0.4))
            throw GeometryError("chord_root must lie in [0.02, 0.4]");
        if (!(taper_exp >= 0.25 && taper_exp <= 4.0))
            throw GeometryError("taper_exp must lie in [0.25, 4]");
        if (!(section_drag_coeff >= 0.0) || !std::isfinite(section_drag_coeff))
            throw GeometryError("section drag coefficient must be non-negative");
    }

    friend bool operator==(const BladeGeometry&, const BladeGeometry&) = default;
};

struct SolverOptions {
    int station_count = 20;
    int max_iterations = 200;
    double relaxation = 0.5;
    double tolerance = 1e-6;
    double density = kSeawaterDensity;

    void validate() const
    {
        if (station_count < 4)
            throw ConfigError("solver station_count must be at least 4");
        if (max_iterations < 1)
            throw ConfigError("solver max_iterations must be at least 1");
        if (!(relaxation > 0.0 && relaxation <= 1.0))
            throw ConfigError("solver relaxation must lie in (0, 1]");
        if (!(tolerance > 0.0))
            throw ConfigError("solver tolerance must be positive");
        if (!(density > 0.0))
            throw ConfigError("fluid density must be positive");
    }

    friend bool operator==(const SolverOptions&, const SolverOptions&) = default;
};

/// Uniform midpoint panels on [r_hub, R].
struct RadialGrid {
    std::vector<double> radii;      // control-point radii r_i [m]
    std::vector<double> widths;     // panel widths dr_i [m]
    std::vector<double> normalized; // (r_i - r_hub) / (R - r_hub)

    std::size_t size() const noexcept { return radii.size(); }
};

inline RadialGrid build_grid(const BladeGeometry& geom, int station_count)
{
    if (station_count < 4)
        throw ConfigError("station count must be at least 4, got " + std::to_string(station_count));
    const double r_hub = geom.hub_radius();
    const double r_tip = geom.tip_radius();
    if (!(r_hub > 0.0) || !(r_hub < r_tip))
        throw GeometryError("degenerate geometry: hub radius must lie strictly inside tip radius");

    const auto m = static_cast<std::size_t>(station_count);
    const double span = r_tip - r_hub;
    const double width = span / static_cast<double>(station_count);

    RadialGrid grid;
    grid.radii.resize(m);
    grid.widths.assign(m, width);
    grid.normalized.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(station_count);
        grid.normalized[i] = x;
        grid.radii[i] = r_hub + x * span;
    }
    return grid;
}

/// Prandtl tip x hub loss factor F in [0, 1] at radius r and inflow angle beta.
inline double prandtl_loss(double r, double beta, const BladeGeometry& geom)
{
    if (!(beta > 0.0 && beta < 0.5 * kPi))
        throw NumericDomainError("inflow angle must lie in (0, pi/2)");
    const double r_hub = geom.hub_radius();
    const double r_tip = geom.tip_radius();
    if (!(r >= r_hub && r <= r_tip) || !(r > 0.0))
        throw NumericDomainError("radius must lie within [r_hub, R]");

    const double z = static_cast<double>(geom.blade_count);
    const double denom = 2.0 * r * std::sin(beta);
    const double f_tip = (2.0 / kPi) * std::acos(std::exp(-z * (r_tip - r) / denom));
    const double f_hub = (2.0 / kPi) * std::acos(std::exp(-z * (r - r_hub) / denom));
    return f_tip * f_hub;
}

struct InducedVelocities {
    std::vector<double> axial;
    std::vector<double> tangential;
};

/// u_t = -Z*Gamma/(4*pi*r*F) (opposes rotation), u_a = -u_t / tan(beta).
inline InducedVelocities induced_velocities(std::span<const double> circulation, const RadialGrid& grid,
                                            std::span<const double> inflow_angles, const BladeGeometry& geom)
{
    const std::size_t m = grid.size();
    if (circulation.size() != m || inflow_angles.size() != m)
        throw ConfigError("induced_velocities: array lengths must match the grid");

    const double z = static_cast<double>(geom.blade_count);
    InducedVelocities u;
    u.axial.resize(m);
    u.tangential.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double f = prandtl_loss(grid.radii[i], inflow_angles[i], geom);
        if (!(f > 0.0))
            throw NumericDomainError("loss factor vanished at a control point");
        const double ut = -z * circulation[i] / (4.0 * kPi * grid.radii[i] * f);
        u.tangential[i] = ut;
        u.axial[i] = -ut / std::tan(inflow_angles[i]);
    }
    return u;
}

struct ForceMoment {
    double thrust = 0.0; // N
    double torque = 0.0; // N*m
};

/// Blade-element sums of inviscid (Kutta-Joukowski) and section-drag loads.
inline ForceMoment thrust_torque(std::span<const double> circulation, const InducedVelocities& induced,
                                 const RadialGrid& grid, const BladeGeometry& geom, const Requirement& req,
                                 double density = kSeawaterDensity)
{
    const std::size_t m = grid.size();
    if (circulation.size() != m || induced.axial.size() != m || induced.tangential.size() != m)
        throw ConfigError("thrust_torque: array lengths must match the grid");

    const double omega = req.omega();
    const double va = req.ship_speed;
    const double z = static_cast<double>(geom.blade_count);
    double t_sum = 0.0;
    double q_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double r = grid.radii[i];
        const double axial = va + induced.axial[i];
        const double tangential = omega * r + induced.tangential[i];
        const double speed = std::hypot(axial, tangential);
        const double chord = geom.diameter * geom.chord_over_diameter(grid.normalized[i]);
        const double drag = 0.5 * speed * chord * geom.section_drag_coeff;
        t_sum += (tangential * circulation[i] - drag * axial) * grid.widths[i];
        q_sum += (axial * circulation[i] + drag * tangential) * r * grid.widths[i];
    }
    return {density * z * t_sum, density * z * q_sum};
}

/// Open-water efficiency T*Va / (Q*omega).
inline double open_water_efficiency(double thrust, double ship_speed, double torque, double omega) noexcept
{
    return thrust * ship_speed / (torque * omega);
}

/// Actuator-disk upper bound on propulsive efficiency, 2 / (1 + sqrt(1 + C_T)).
inline double ideal_efficiency(const Requirement& req, double diameter, double density = kSeawaterDensity)
{
    const double radius = 0.5 * diameter;
    const double ct =
        req.thrust_req / (0.5 * density * req.ship_speed * req.ship_speed * kPi * radius * radius);
    return 2.0 / (1.0 + std::sqrt(1.0 + ct));
}

struct CirculationSolution {
    RadialGrid grid;
    std::vector<double> circulation;        // Gamma_i [m^2/s]
    double lagrange_multiplier = 0.0;       // lambda1 (negative for a thrust-producing optimum)
    std::vector<double> axial_induced;      // u_a,i [m/s]
    std::vector<double> tangential_induced; // u_t,i [m/s]
    std::vector<double> inflow_angle;       // beta_i [rad]
    std::vector<double> pitch_ratio;        // P/D at r_i
    bool converged = false;
    bool infeasible = false;
    int iterations = 0;
};

namespace detail {

// Station contribution to H per unit (rho * Z * dr), as a function of its own
// circulation g, with angles frozen (a, b > 0):
//   va = Va + b*g, vt = omega*r - a*g, V = |(va, vt)|, k = chord*C_D/2
//   h(g) = r*(va*g + k*V*vt) + lambda1*(vt*g - k*V*va)
// Written with mu = -lambda1 >= 0. The inviscid part is convex in g.
struct Station {
    double r = 0.0;
    double omega_r = 0.0;
    double va0 = 0.0;
    double a = 0.0; // -du_t/dGamma
    double b = 0.0; // du_a/dGamma
    double k = 0.0;

    double slope(double g, double mu) const noexcept
    {
        const double va = va0 + b * g;
        const double vt = omega_r - a * g;
        const double v = std::sqrt(va * va + vt * vt);
        const double dv = (b * va - a * vt) / v;
        return r * (va + b * g) + k * r * (dv * vt - v * a) - mu * ((vt - a * g) - k * (dv * va + v * b));
    }

    double curvature(double g, double mu) const noexcept
    {
        const double va = va0 + b * g;
        const double vt = omega_r - a * g;
        const double v = std::sqrt(va * va + vt * vt);
        const double dv = (b * va - a * vt) / v;
        const double d2v = (a * a + b * b - dv * dv) / v;
        return 2.0 * r * b + k * r * (d2v * vt - 2.0 * dv * a) + mu * (2.0 * a + k * (d2v * va + 2.0 * dv * b));
    }

    /// Thrust per unit (rho * Z * dr).
    double thrust(double g) const noexcept
    {
        const double va = va0 + b * g;
        const double vt = omega_r - a * g;
        return vt * g - k * std::sqrt(va * va + vt * vt) * va;
    }
};

// Minimizer of h over g >= 0 for the given mu. warm is a starting guess.
inline double minimize_station(const Station& s, double mu, double warm) noexcept
{
    if (s.slope(0.0, mu) >= 0.0)
        return 0.0;

    // The slope is positive once the section stops turning (vt = 0).
    double lo = 0.0;
    double hi = s.omega_r / s.a;
    while (s.slope(hi, mu) < 0.0) {
        lo = hi;
        hi *= 2.0;
        if (!std::isfinite(hi))
            return lo;
    }

    // Safeguarded Newton on the slope.
    double x = warm > lo && warm < hi ? warm : 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double f = s.slope(x, mu);
        if (f == 0.0)
            return x;
        if (f < 0.0)
            lo = x;
        else
            hi = x;
        const double c = s.curvature(x, mu);
        double next = c > 0.0 ? x - f / c : 0.5 * (lo + hi);
        if (!(next > lo && next < hi))
            next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-15 * std::abs(x) || hi - lo <= 1e-15 * hi)
            return next;
        x = next;
    }
    return x;
}

} // namespace detail

/// Torque-minimizing circulation meeting the thrust requirement.
inline CirculationSolution solve_optimal_circulation(const BladeGeometry& geom, const Requirement& req,
                                                     const SolverOptions& options = {})
{
    geom.validate();
    req.validate();
    options.validate();

    CirculationSolution sol;
    sol.grid = build_grid(geom, options.station_count);
    const RadialGrid& grid = sol.grid;
    const std::size_t m = grid.size();

    const double omega = req.omega();
    const double va = req.ship_speed;
    const double z = static_cast<double>(geom.blade_count);
    const double rho_z = options.density * z;
    const double r_hub = geom.hub_radius();
    const double r_tip = geom.tip_radius();

    std::vector<double> chord(m);
    for (std::size_t i = 0; i < m; ++i)
        chord[i] = geom.diameter * geom.chord_over_diameter(grid.normalized[i]);

    // Momentum-scale uniform start and undisturbed inflow.
    const double r_mean = 0.5 * (r_hub + r_tip);
    std::vector<double> gamma(m, req.thrust_req / (rho_z * omega * r_mean * (r_tip - r_hub)));
    std::vector<double> beta(m);
    for (std::size_t i = 0; i < m; ++i)
        beta[i] = std::atan2(va, omega * grid.radii[i]);

    std::vector<detail::Station> stations(m);
    std::vector<double> solved(m, 0.0);
    std::vector<double> trial(m, 0.0);
    double mu = 0.0;

    auto thrust_at = [&](double mu_try, std::vector<double>& out) {
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            out[i] = detail::minimize_station(stations[i], mu_try, out[i]);
            total += stations[i].thrust(out[i]) * grid.widths[i];
        }
        return rho_z * total;
    };

    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        sol.iterations = iter;

        // (a) Freeze angles, loss factors and induction coefficients.
        for (std::size_t i = 0; i < m; ++i) {
            const double f = prandtl_loss(grid.radii[i], beta[i], geom);
            auto& s = stations[i];
            s.r = grid.radii[i];
            s.omega_r = omega * grid.radii[i];
            s.va0 = va;
            s.a = z / (4.0 * kPi * grid.radii[i] * f);
            s.b = s.a / std::tan(beta[i]);
            s.k = 0.5 * chord[i] * geom.section_drag_coeff;
        }

        // (b) Bracket the multiplier. Thrust is non-positive at mu = 0 and
        // saturates as mu grows; if the saturated thrust is short of the
        // requirement the demand is unreachable for this geometry.
        std::copy(solved.begin(), solved.end(), trial.begin());
        double mu_lo = 0.0;
        double f_lo = thrust_at(0.0, trial) - req.thrust_req;
        double mu_hi = mu > 0.0 ? 1.25 * mu : 2.0 * va / omega;
        double f_hi = thrust_at(mu_hi, trial) - req.thrust_req;
        int expansions = 0;
        while (f_hi < 0.0) {
            mu_lo = mu_hi;
            f_lo = f_hi;
            mu_hi *= 2.0;
            f_hi = thrust_at(mu_hi, trial) - req.thrust_req;
            if (++expansions > 60) {
                sol.infeasible = true;
                break;
            }
        }
        if (sol.infeasible)
            break;

        // Root of the thrust constraint (dH/dlambda1 = 0) by the Illinois
        // variant of regula falsi, falling back to bisection.
        double best_err = std::numeric_limits<double>::infinity();
        int side = 0;
        for (int it = 0; it < 200; ++it) {
            double mid = (mu_lo * f_hi - mu_hi * f_lo) / (f_hi - f_lo);
            if (!(mid > mu_lo && mid < mu_hi))
                mid = 0.5 * (mu_lo + mu_hi);
            const double f = thrust_at(mid, trial) - req.thrust_req;
            const double err = f / req.thrust_req;
            if (std::abs(err) < best_err) {
                best_err = std::abs(err);
                mu = mid;
                std::copy(trial.begin(), trial.end(), solved.begin());
            }
            if (std::abs(err) <= 1e-12)
                break;
            if (f < 0.0) {
                mu_lo = mid;
                f_lo = f;
                if (side == -1)
                    f_hi *= 0.5;
                side = -1;
            } else {
                mu_hi = mid;
                f_hi = f;
                if (side == 1)
                    f_lo *= 0.5;
                side = 1;
            }
            if (mu_hi - mu_lo <= 1e-15 * mu_hi)
                break;
        }

        // (c) Relax, then thaw the angles.
        double max_change = 0.0;
        double max_gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double next = (1.0 - options.relaxation) * gamma[i] + options.relaxation * solved[i];
            max_change = std::max(max_change, std::abs(next - gamma[i]));
            max_gamma = std::max(max_gamma, next);
            gamma[i] = next;
        }

        bool bad = !(max_gamma > 0.0) || !std::isfinite(max_gamma);
        if (!bad) {
            const auto u = induced_velocities(gamma, grid, beta, geom);
            for (std::size_t i = 0; i < m; ++i) {
                const double b_new = std::atan2(va + u.axial[i], omega * grid.radii[i] + u.tangential[i]);
                if (!(b_new > 0.0 && b_new < 0.5 * kPi) || !std::isfinite(b_new)) {
                    bad = true;
                    break;
                }
                beta[i] = b_new;
            }
        }
        if (bad) {
            sol.infeasible = true;
            break;
        }
        if (max_change / max_gamma < options.tolerance) {
            sol.converged = true;
            break;
        }
    }

    sol.circulation = gamma;
    sol.inflow_angle = beta;
    sol.lagrange_multiplier = -mu;
    sol.pitch_ratio.resize(m);
    for (std::size_t i = 0; i < m; ++i)
        sol.pitch_ratio[i] = 2.0 * kPi * grid.radii[i] * std::tan(beta[i]) / geom.diameter;

    if (!sol.infeasible) {
        const auto u = induced_velocities(gamma, grid, beta, geom);
        sol.axial_induced = u.axial;
        sol.tangential_induced = u.tangential;
    } else {
        sol.axial_induced.assign(m, 0.0);
        sol.tangential_induced.assign(m, 0.0);
    }
    if (sol.infeasible)
        sol.converged = false;
    return sol;
}

struct Performance {
    double thrust = 0.0;
    double torque = 0.0;
    double efficiency = 0.0; // 0 when infeasible
    double advance_ratio = 0.0;
    bool feasible = false;
};

/// Designs the circulation for (geom, req) and reports the resulting loads and efficiency.
inline Performance evaluate(const BladeGeometry& geom, const Requirement& req, const SolverOptions& options = {})
{
    const auto sol = solve_optimal_circulation(geom, req, options);

    Performance perf;
    perf.advance_ratio = req.ship_speed / (req.revs_per_second() * geom.diameter);
    if (!sol.converged)
        return perf;

    const InducedVelocities u{sol.axial_induced, sol.tangential_induced};
    const auto loads = thrust_torque(sol.circulation, u, sol.grid, geom, req, options.density);
    perf.thrust = loads.thrust;
    perf.torque = loads.torque;
    const double eta = open_water_efficiency(loads.thrust, req.ship_speed, loads.torque, req.omega());
    const bool thrust_met = std::abs(loads.thrust - req.thrust_req) <= 1e-3 * req.thrust_req;
    if (std::isfinite(eta) && eta > 0.0 && eta < 1.0 && thrust_met) {
        perf.efficiency = eta;
        perf.feasible = true;
    }
    return perf;
}

} // namespace propsao
