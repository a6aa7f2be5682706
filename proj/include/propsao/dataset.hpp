#pragma once

// Labeled design corpus: (requirement, geometry, efficiency) records
// produced by running the solver over sampled pairs, with the low-efficiency
// designs filtered out. CSV persistence and a seeded train/test split.

#include "propsao/common.hpp"
#include "propsao/design_space.hpp"
#include "propsao/hydro.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

namespace propsao {

struct DesignRecord {
    Requirement requirement;
    BladeGeometry geometry;
    double efficiency = 0.0;

    friend bool operator==(const DesignRecord&, const DesignRecord&) = default;
};

namespace detail {

inline auto record_key(const DesignRecord& r)
{
    const auto& q = r.requirement;
    const auto& g = r.geometry;
    return std::make_tuple(q.thrust_req, q.ship_speed, q.rpm, g.blade_count, g.diameter, g.hub_diameter,
                           g.chord_root, g.taper_exp, g.section_drag_coeff);
}

} // namespace detail

/// Canonical order: requirement fields, then geometry fields.
inline bool canonical_less(const DesignRecord& a, const DesignRecord& b)
{
    return detail::record_key(a) < detail::record_key(b);
}

struct Dataset {
    std::vector<DesignRecord> records;
    DesignSpaceConfig generation_config = default_config();
    double efficiency_floor = 0.0;

    std::size_t size() const noexcept { return records.size(); }
    bool empty() const noexcept { return records.empty(); }
};

/// Order-sensitive hash over every stored field; ties models to their corpus.
inline std::uint64_t fingerprint(const Dataset& ds)
{
    Fnv1a h;
    h.u64(ds.records.size());
    for (const auto& r : ds.records) {
        h.f64(r.requirement.thrust_req);
        h.f64(r.requirement.ship_speed);
        h.f64(r.requirement.rpm);
        h.u64(static_cast<std::uint64_t>(r.geometry.blade_count));
        h.f64(r.geometry.diameter);
        h.f64(r.geometry.hub_diameter);
        h.f64(r.geometry.chord_root);
        h.f64(r.geometry.taper_exp);
        h.f64(r.geometry.section_drag_coeff);
        h.f64(r.efficiency);
    }
    return h.value();
}

struct GenerationStats {
    std::size_t attempts = 0;
    std::size_t feasible = 0;
    std::size_t kept = 0;
};

/// Samples (requirement, geometry) pairs, evaluates them, and keeps feasible
/// designs with efficiency >= floor until `target_count` are kept or 20x that
/// many attempts are spent. Attempt k draws from its own sub-stream of
/// cfg.rng_seed and the kept set is chosen in attempt order, so the result
/// does not depend on `parallelism`.
inline Dataset generate(const DesignSpaceConfig& cfg, std::size_t target_count, double efficiency_floor,
                        unsigned parallelism, const SolverOptions& solver = {}, GenerationStats* stats = nullptr)
{
    cfg.validate();
    solver.validate();
    if (target_count == 0)
        throw ConfigError("target count must be positive");
    if (!(efficiency_floor >= 0.0 && efficiency_floor < 1.0))
        throw ConfigError("efficiency floor must lie in [0, 1)");

    const std::size_t budget = 20 * target_count;
    const std::size_t chunk = std::max<std::size_t>(64, 16 * std::max(1u, parallelism));

    Dataset ds;
    ds.generation_config = cfg;
    ds.efficiency_floor = efficiency_floor;

    using Key = decltype(detail::record_key(DesignRecord{}));
    std::set<Key> seen;
    GenerationStats local;

    std::vector<DesignRecord> batch;
    std::vector<char> ok;
    std::size_t next = 0;
    while (next < budget && ds.records.size() < target_count) {
        const std::size_t n = std::min(chunk, budget - next);
        batch.assign(n, DesignRecord{});
        ok.assign(n, 0);
        parallel_for(n, parallelism, [&](std::size_t j) {
            Rng rng(derive_seed(cfg.rng_seed, next + j));
            DesignRecord rec;
            rec.requirement = sample_requirement(cfg, rng);
            rec.geometry = sample_geometry(cfg, rng);
            const auto perf = evaluate(rec.geometry, rec.requirement, solver);
            rec.efficiency = perf.efficiency;
            batch[j] = rec;
            ok[j] = perf.feasible ? 1 : 0;
        });
        for (std::size_t j = 0; j < n && ds.records.size() < target_count; ++j) {
            ++local.attempts;
            if (!ok[j])
                continue;
            ++local.feasible;
            if (batch[j].efficiency < efficiency_floor)
                continue;
            if (!seen.insert(detail::record_key(batch[j])).second)
                continue;
            ds.records.push_back(batch[j]);
        }
        next += n;
    }
    local.kept = ds.records.size();
    if (stats)
        *stats = local;

    if (ds.records.empty())
        throw GenerationError("attempt budget exhausted: no design reached efficiency floor "
                              + std::to_string(efficiency_floor) + " in " + std::to_string(budget) + " attempts");

    std::sort(ds.records.begin(), ds.records.end(), canonical_less);
    return ds;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr std::string_view kDatasetHeader =
    "thrust_n,speed_mps,rpm,blade_count,diameter_m,hub_diameter_m,chord_root,taper_exp,cd,efficiency";

namespace detail {

inline void append_double(std::string& out, double v)
{
    char buf[40];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    out.append(buf, static_cast<std::size_t>(n));
}

inline double parse_double(std::string_view field, std::size_t line)
{
    double v = 0.0;
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        throw FormatError("line " + std::to_string(line) + ": malformed number '" + std::string(field) + "'");
    return v;
}

inline std::vector<std::string_view> split_fields(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

} // namespace detail

inline std::string to_csv(const Dataset& ds)
{
    std::string out;
    out.reserve(64 + ds.records.size() * 200);
    out.append(kDatasetHeader);
    out.push_back('\n');
    for (const auto& r : ds.records) {
        detail::append_double(out, r.requirement.thrust_req);
        out.push_back(',');
        detail::append_double(out, r.requirement.ship_speed);
        out.push_back(',');
        detail::append_double(out, r.requirement.rpm);
        out.push_back(',');
        out.append(std::to_string(r.geometry.blade_count));
        out.push_back(',');
        detail::append_double(out, r.geometry.diameter);
        out.push_back(',');
        detail::append_double(out, r.geometry.hub_diameter);
        out.push_back(',');
        detail::append_double(out, r.geometry.chord_root);
        out.push_back(',');
        detail::append_double(out, r.geometry.taper_exp);
        out.push_back(',');
        detail::append_double(out, r.geometry.section_drag_coeff);
        out.push_back(',');
        detail::append_double(out, r.efficiency);
        out.push_back('\n');
    }
    return out;
}

inline Dataset from_csv(std::string_view text)
{
    Dataset ds;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);

        if (!header_seen) {
            if (line != kDatasetHeader)
                throw FormatError("schema error: expected header '" + std::string(kDatasetHeader) + "'");
            header_seen = true;
            continue;
        }
        if (line.empty())
            continue;

        const auto f = detail::split_fields(line, ',');
        if (f.size() != 10)
            throw FormatError("line " + std::to_string(line_no) + ": expected 10 fields, got "
                              + std::to_string(f.size()));
        DesignRecord r;
        r.requirement.thrust_req = detail::parse_double(f[0], line_no);
        r.requirement.ship_speed = detail::parse_double(f[1], line_no);
        r.requirement.rpm = detail::parse_double(f[2], line_no);
        int z = 0;
        {
            const auto [ptr, ec] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), z);
            if (ec != std::errc{} || ptr != f[3].data() + f[3].size())
                throw FormatError("line " + std::to_string(line_no) + ": malformed blade count");
        }
        r.geometry.blade_count = z;
        r.geometry.diameter = detail::parse_double(f[4], line_no);
        r.geometry.hub_diameter = detail::parse_double(f[5], line_no);
        r.geometry.chord_root = detail::parse_double(f[6], line_no);
        r.geometry.taper_exp = detail::parse_double(f[7], line_no);
        r.geometry.section_drag_coeff = detail::parse_double(f[8], line_no);
        r.efficiency = detail::parse_double(f[9], line_no);

        try {
            r.requirement.validate();
            r.geometry.validate();
        } catch (const Error& e) {
            throw FormatError("line " + std::to_string(line_no) + ": invariant violation: " + e.what());
        }
        if (!(r.efficiency > 0.0 && r.efficiency < 1.0))
            throw FormatError("line " + std::to_string(line_no) + ": invariant violation: efficiency must lie in (0, 1)");
        ds.records.push_back(r);
    }
    if (!header_seen)
        throw FormatError("schema error: missing header");

    double floor = 1.0;
    for (const auto& r : ds.records)
        floor = std::min(floor, r.efficiency);
    ds.efficiency_floor = ds.records.empty() ? 0.0 : floor;
    return ds;
}

inline void save(const Dataset& ds, const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + path + "' for writing");
    const auto text = to_csv(ds);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out)
        throw Error("write failed for '" + path + "'");
}

inline Dataset load(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open '" + path + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_csv(buf.str());
}

/// Disjoint seeded partition with |test| = round(test_fraction * |ds|).
/// Both parts keep the source order.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction, std::uint64_t seed)
{
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("test fraction must lie in (0, 1)");

    const std::size_t n = ds.size();
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = i;
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[uniform_index(rng, i)]);

    std::vector<char> in_test(n, 0);
    for (std::size_t i = 0; i < n_test; ++i)
        in_test[order[i]] = 1;

    Dataset train;
    Dataset test;
    train.generation_config = test.generation_config = ds.generation_config;
    train.efficiency_floor = test.efficiency_floor = ds.efficiency_floor;
    for (std::size_t i = 0; i < n; ++i)
        (in_test[i] ? test : train).records.push_back(ds.records[i]);
    return {std::move(train), std::move(test)};
}

} // namespace propsao
