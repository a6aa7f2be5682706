#pragma once

// Requirement space R and geometry space G: ranges, the chord-profile
// catalog used for data generation, samplers, and the GA genome encoding.

#include "propsao/common.hpp"
#include "propsao/hydro.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace propsao {

struct Range {
    double lo = 0.0;
    double hi = 0.0;

    double width() const noexcept { return hi - lo; }
    double clamp(double v) const noexcept { return std::clamp(v, lo, hi); }
    bool contains(double v) const noexcept { return v >= lo && v <= hi; }

    friend bool operator==(const Range&, const Range&) = default;
};

struct ChordProfile {
    double chord_root = 0.0;
    double taper_exp = 0.0;

    friend bool operator==(const ChordProfile&, const ChordProfile&) = default;
};

struct DesignSpaceConfig {
    Range thrust{10e3, 500e3}; // N
    Range speed{5.0, 20.0};    // m/s
    Range rpm{500.0, 4000.0};
    Range diameter{0.5, 4.0}; // m
    Range hub_ratio{0.15, 0.30};
    std::vector<int> blade_counts{3, 4, 5, 6};
    std::vector<ChordProfile> chord_catalog;

    // Continuous chord search box for the GA (data generation stays on the catalog).
    Range chord_root_range{0.05, 0.30};
    Range taper_exp_range{0.25, 4.0};

    // Optional discrete lattices. When non-empty, decode snaps the gene to the
    // nearest level; chord_catalog_only snaps (chord_root, taper_exp) to the
    // nearest catalog entry. Together they make the search space enumerable.
    std::vector<double> diameter_levels;
    std::vector<double> hub_ratio_levels;
    bool chord_catalog_only = false;

    double section_drag_coeff = 0.008;
    std::uint64_t rng_seed = 1;

    void validate() const
    {
        auto check = [](const Range& r, const char* name) {
            if (!(r.lo < r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi))
                throw ConfigError(std::string("range '") + name + "' must satisfy min < max");
        };
        check(thrust, "thrust");
        check(speed, "speed");
        check(rpm, "rpm");
        check(diameter, "diameter");
        check(hub_ratio, "hub_ratio");
        check(chord_root_range, "chord_root");
        check(taper_exp_range, "taper_exp");
        if (!(thrust.lo > 0.0 && speed.lo > 0.0 && rpm.lo > 0.0 && diameter.lo > 0.0))
            throw ConfigError("requirement and diameter ranges must be positive");
        if (!(hub_ratio.lo > 0.0 && hub_ratio.hi < 1.0))
            throw ConfigError("hub_ratio range must lie inside (0, 1)");
        if (blade_counts.empty())
            throw ConfigError("blade_counts must be nonempty");
        for (int z : blade_counts)
            if (z < 3 || z > 6)
                throw ConfigError("blade counts must be in {3,4,5,6}");
        if (chord_catalog.empty())
            throw ConfigError("chord catalog must be nonempty");
        for (const auto& p : chord_catalog) {
            if (!(p.chord_root >= 0.02 && p.chord_root <= 0.4 && p.taper_exp >= 0.25 && p.taper_exp <= 4.0))
                throw ConfigError("chord catalog entry outside geometry limits");
            if (!chord_root_range.contains(p.chord_root) || !taper_exp_range.contains(p.taper_exp))
                throw ConfigError("chord catalog entry outside the chord search box");
        }
        if (!(chord_root_range.lo >= 0.02 && chord_root_range.hi <= 0.4))
            throw ConfigError("chord_root range must lie inside [0.02, 0.4]");
        if (!(taper_exp_range.lo >= 0.25 && taper_exp_range.hi <= 4.0))
            throw ConfigError("taper_exp range must lie inside [0.25, 4]");
        for (double d : diameter_levels)
            if (!diameter.contains(d))
                throw ConfigError("diameter level outside diameter range");
        for (double h : hub_ratio_levels)
            if (!hub_ratio.contains(h))
                throw ConfigError("hub_ratio level outside hub_ratio range");
        if (!(section_drag_coeff >= 0.0))
            throw ConfigError("section drag coefficient must be non-negative");
    }

    friend bool operator==(const DesignSpaceConfig&, const DesignSpaceConfig&) = default;
};

/// Desk-scale ranges bracketing the sample requirements used in the
/// benchmark, with a nine-entry chord catalog {0.10,0.15,0.20} x {0.5,1,2}.
inline DesignSpaceConfig default_config()
{
    DesignSpaceConfig cfg;
    for (double c : {0.10, 0.15, 0.20})
        for (double t : {0.5, 1.0, 2.0})
            cfg.chord_catalog.push_back({c, t});
    return cfg;
}

inline Requirement sample_requirement(const DesignSpaceConfig& cfg, Rng& rng)
{
    Requirement r;
    r.thrust_req = uniform(rng, cfg.thrust.lo, cfg.thrust.hi);
    r.ship_speed = uniform(rng, cfg.speed.lo, cfg.speed.hi);
    r.rpm = uniform(rng, cfg.rpm.lo, cfg.rpm.hi);
    return r;
}

/// Diameter and hub ratio uniform in range (or over the levels when set);
/// chord profile uniform over the catalog; blade count uniform over the set.
inline BladeGeometry sample_geometry(const DesignSpaceConfig& cfg, Rng& rng)
{
    BladeGeometry g;
    g.diameter = cfg.diameter_levels.empty() ? uniform(rng, cfg.diameter.lo, cfg.diameter.hi)
                                             : cfg.diameter_levels[uniform_index(rng, cfg.diameter_levels.size())];
    const double ratio = cfg.hub_ratio_levels.empty()
                             ? uniform(rng, cfg.hub_ratio.lo, cfg.hub_ratio.hi)
                             : cfg.hub_ratio_levels[uniform_index(rng, cfg.hub_ratio_levels.size())];
    g.hub_diameter = ratio * g.diameter;
    const auto& profile = cfg.chord_catalog[uniform_index(rng, cfg.chord_catalog.size())];
    g.chord_root = profile.chord_root;
    g.taper_exp = profile.taper_exp;
    g.blade_count = cfg.blade_counts[uniform_index(rng, cfg.blade_counts.size())];
    g.section_drag_coeff = cfg.section_drag_coeff;
    return g;
}

// ---------------------------------------------------------------------------
// Genome

enum Gene : std::size_t { kDiameter = 0, kHubRatio = 1, kChordRoot = 2, kTaperExp = 3 };
inline constexpr std::size_t kGeneCount = 4;

struct Genome {
    std::array<double, kGeneCount> values{}; // diameter, hub_ratio, chord_root, taper_exp
    std::size_t blade_index = 0;

    friend bool operator==(const Genome&, const Genome&) = default;
};

/// Search box of each continuous gene.
inline Range gene_range(const DesignSpaceConfig& cfg, std::size_t gene)
{
    switch (gene) {
    case kDiameter:
        return cfg.diameter;
    case kHubRatio:
        return cfg.hub_ratio;
    case kChordRoot:
        return cfg.chord_root_range;
    default:
        return cfg.taper_exp_range;
    }
}

inline Genome encode(const BladeGeometry& geom, const DesignSpaceConfig& cfg)
{
    Genome g;
    g.values[kDiameter] = geom.diameter;
    g.values[kHubRatio] = geom.hub_diameter / geom.diameter;
    g.values[kChordRoot] = geom.chord_root;
    g.values[kTaperExp] = geom.taper_exp;
    const auto it = std::find(cfg.blade_counts.begin(), cfg.blade_counts.end(), geom.blade_count);
    if (it == cfg.blade_counts.end())
        throw GeometryError("blade count " + std::to_string(geom.blade_count) + " not in the configured set");
    g.blade_index = static_cast<std::size_t>(it - cfg.blade_counts.begin());
    return g;
}

namespace detail {

inline double snap(double v, const std::vector<double>& levels) noexcept
{
    double best = levels.front();
    for (double l : levels)
        if (std::abs(l - v) < std::abs(best - v))
            best = l;
    return best;
}

} // namespace detail

/// Total on arbitrary genomes: genes are clamped to their boxes (and snapped
/// to lattices when configured) before the geometry is built.
inline BladeGeometry decode(const Genome& genome, const DesignSpaceConfig& cfg)
{
    auto gene = [&](std::size_t i) {
        const double v = genome.values[i];
        const Range r = gene_range(cfg, i);
        return std::isfinite(v) ? r.clamp(v) : r.lo;
    };

    BladeGeometry g;
    g.diameter = gene(kDiameter);
    if (!cfg.diameter_levels.empty())
        g.diameter = detail::snap(g.diameter, cfg.diameter_levels);
    double ratio = gene(kHubRatio);
    if (!cfg.hub_ratio_levels.empty())
        ratio = detail::snap(ratio, cfg.hub_ratio_levels);
    g.hub_diameter = ratio * g.diameter;

    g.chord_root = gene(kChordRoot);
    g.taper_exp = gene(kTaperExp);
    if (cfg.chord_catalog_only) {
        // Nearest catalog entry in box-normalized coordinates.
        const double sc = cfg.chord_root_range.width();
        const double st = cfg.taper_exp_range.width();
        const ChordProfile* best = &cfg.chord_catalog.front();
        double best_d = std::numeric_limits<double>::infinity();
        for (const auto& p : cfg.chord_catalog) {
            const double dc = (p.chord_root - g.chord_root) / sc;
            const double dt = (p.taper_exp - g.taper_exp) / st;
            const double d = dc * dc + dt * dt;
            if (d < best_d) {
                best_d = d;
                best = &p;
            }
        }
        g.chord_root = best->chord_root;
        g.taper_exp = best->taper_exp;
    }

    g.blade_count = cfg.blade_counts[std::min(genome.blade_index, cfg.blade_counts.size() - 1)];
    g.section_drag_coeff = cfg.section_drag_coeff;
    return g;
}

/// Uniform random genome over the search boxes (or lattices).
inline Genome random_genome(const DesignSpaceConfig& cfg, Rng& rng)
{
    Genome g;
    for (std::size_t i = 0; i < kGeneCount; ++i) {
        const Range r = gene_range(cfg, i);
        g.values[i] = uniform(rng, r.lo, r.hi);
    }
    if (!cfg.diameter_levels.empty())
        g.values[kDiameter] = cfg.diameter_levels[uniform_index(rng, cfg.diameter_levels.size())];
    if (!cfg.hub_ratio_levels.empty())
        g.values[kHubRatio] = cfg.hub_ratio_levels[uniform_index(rng, cfg.hub_ratio_levels.size())];
    if (cfg.chord_catalog_only) {
        const auto& p = cfg.chord_catalog[uniform_index(rng, cfg.chord_catalog.size())];
        g.values[kChordRoot] = p.chord_root;
        g.values[kTaperExp] = p.taper_exp;
    }
    g.blade_index = uniform_index(rng, cfg.blade_counts.size());
    return g;
}

} // namespace propsao
