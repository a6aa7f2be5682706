#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include "propsao/propsao.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

namespace testing_support {

using namespace propsao;

struct Stationarity {
    double worst = 0.0;      // max |dH/dGamma_i| / (|H| / max Gamma) over loaded stations
    double worst_clamped = 0.0; // max of -dH/dGamma_i (scaled) over clamped stations; <= 0 means KKT-consistent
};

/// H = Q + lambda1 (T - Ts) with u recomputed from the perturbed circulation at
/// the converged angles. Central differences at +-0.1% for loaded stations,
/// a forward step for stations clamped at zero.
inline Stationarity stationarity(const CirculationSolution& sol, const BladeGeometry& geom, const Requirement& req,
                                 double density = kSeawaterDensity)
{
    auto h_of = [&](const std::vector<double>& gamma) {
        const auto u = induced_velocities(gamma, sol.grid, sol.inflow_angle, geom);
        const auto tq = thrust_torque(gamma, u, sol.grid, geom, req, density);
        return tq.torque + sol.lagrange_multiplier * (tq.thrust - req.thrust_req);
    };
    const double g_max = *std::max_element(sol.circulation.begin(), sol.circulation.end());
    const double h0 = h_of(sol.circulation);
    const double scale = std::abs(h0) / g_max;

    Stationarity out;
    auto gamma = sol.circulation;
    for (std::size_t i = 0; i < gamma.size(); ++i) {
        const double g = sol.circulation[i];
        if (g > 0.0) {
            const double step = 1e-3 * g;
            gamma[i] = g + step;
            const double hp = h_of(gamma);
            gamma[i] = g - step;
            const double hm = h_of(gamma);
            out.worst = std::max(out.worst, std::abs((hp - hm) / (2.0 * step)) / scale);
        } else {
            const double step = 1e-3 * g_max;
            gamma[i] = step;
            const double hp = h_of(gamma);
            out.worst_clamped = std::max(out.worst_clamped, -((hp - h0) / step) / scale);
        }
        gamma[i] = g;
    }
    return out;
}

/// Synthetic record with valid fields; efficiency strictly inside (0, 1).
inline DesignRecord synthetic_record(Rng& rng)
{
    DesignRecord r;
    r.requirement = {uniform(rng, 1e4, 5e5), uniform(rng, 5.0, 20.0), uniform(rng, 500.0, 4000.0)};
    r.geometry.blade_count = 3 + static_cast<int>(uniform_index(rng, 4));
    r.geometry.diameter = uniform(rng, 0.5, 4.0);
    r.geometry.hub_diameter = uniform(rng, 0.15, 0.30) * r.geometry.diameter;
    r.geometry.chord_root = uniform(rng, 0.05, 0.30);
    r.geometry.taper_exp = uniform(rng, 0.25, 4.0);
    r.efficiency = uniform(rng, 0.3, 0.9);
    return r;
}

inline Dataset synthetic_dataset(std::size_t n, std::uint64_t seed)
{
    Rng rng(seed);
    Dataset ds;
    for (std::size_t i = 0; i < n; ++i)
        ds.records.push_back(synthetic_record(rng));
    return ds;
}

/// 3 diameters x 9 catalog chord profiles x 3 hub ratios, Z fixed at 4.
inline DesignSpaceConfig grid81_space()
{
    auto s = default_config();
    s.blade_counts = {4};
    s.diameter_levels = {0.8, 1.0, 1.2};
    s.hub_ratio_levels = {0.15, 0.20, 0.25};
    s.chord_catalog_only = true;
    return s;
}

inline std::vector<BladeGeometry> grid81_designs(const DesignSpaceConfig& s)
{
    std::vector<BladeGeometry> out;
    for (double d : s.diameter_levels)
        for (const auto& p : s.chord_catalog)
            for (double h : s.hub_ratio_levels) {
                BladeGeometry g;
                g.blade_count = s.blade_counts.front();
                g.diameter = d;
                g.hub_diameter = h * d;
                g.chord_root = p.chord_root;
                g.taper_exp = p.taper_exp;
                g.section_drag_coeff = s.section_drag_coeff;
                out.push_back(g);
            }
    return out;
}

inline const Requirement kGridRequirement{51783.0, 7.5, 3551.0};

inline std::string read_bytes(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline std::filesystem::path fresh_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("propsao_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

struct RunResult {
    int exit_code = -1;
    std::string output; // stdout and stderr
};

/// Runs the CLI with a shell-quoted argument string.
inline RunResult run_cli(const std::string& args, const std::filesystem::path& log)
{
    const std::string cmd = std::string("\"") + PROPSAO_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = read_bytes(log);
    return r;
}

} // namespace testing_support
