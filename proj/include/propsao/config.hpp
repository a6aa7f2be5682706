#pragma once

// Toolkit configuration: one INI file with [solver], [space], [ga] and [data]
// sections. Missing keys keep their defaults; unknown keys are rejected.

#include "propsao/common.hpp"
#include "propsao/dataset.hpp"
#include "propsao/design_space.hpp"
#include "propsao/hydro.hpp"
#include "propsao/optimizer.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace propsao {

struct DataConfig {
    std::size_t count = 20000;
    double efficiency_floor = 0.5;
    double test_fraction = 0.05;
    std::size_t tree_count = 100;
    std::uint64_t split_seed = 1;
    std::uint64_t forest_seed = 1;

    void validate() const
    {
        if (count == 0)
            throw ConfigError("data count must be positive");
        if (!(efficiency_floor >= 0.0 && efficiency_floor < 1.0))
            throw ConfigError("data floor must lie in [0, 1)");
        if (!(test_fraction > 0.0 && test_fraction < 1.0))
            throw ConfigError("data test_fraction must lie in (0, 1)");
        if (tree_count == 0)
            throw ConfigError("data trees must be positive");
    }

    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct ToolkitConfig {
    SolverOptions solver;
    DesignSpaceConfig space = default_config();
    GaConfig ga;
    DataConfig data;

    void validate() const
    {
        solver.validate();
        space.validate();
        ga.validate();
        data.validate();
    }

    friend bool operator==(const ToolkitConfig&, const ToolkitConfig&) = default;
};

namespace detail {

namespace pt = boost::property_tree;

// Shortest text that reads back to the same double.
inline std::string fmt_double(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string fmt_list(const std::vector<double>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i)
            s.push_back(',');
        s += fmt_double(v[i]);
    }
    return s;
}

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& key, std::string_view text)
{
    const auto s = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        throw ConfigError("config key '" + key + "': expected a number, got '" + std::string(text) + "'");
    return v;
}

template <class Int>
Int to_integer(const std::string& key, std::string_view text)
{
    const auto s = trim(text);
    Int v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        throw ConfigError("config key '" + key + "': expected an integer, got '" + std::string(text) + "'");
    return v;
}

inline bool to_bool(const std::string& key, std::string_view text)
{
    const auto s = trim(text);
    if (s == "true" || s == "1")
        return true;
    if (s == "false" || s == "0")
        return false;
    throw ConfigError("config key '" + key + "': expected true or false");
}

inline std::vector<double> to_list(const std::string& key, std::string_view text)
{
    std::vector<double> out;
    if (trim(text).empty())
        return out;
    for (auto f : split_fields(text, ','))
        out.push_back(to_double(key, f));
    return out;
}

class Section {
public:
    Section(const pt::ptree& root, std::string name) : name_(std::move(name))
    {
        if (const auto child = root.get_child_optional(name_))
            tree_ = &*child;
    }

    const std::string* find(const std::string& key)
    {
        seen_.insert(key);
        if (!tree_)
            return nullptr;
        const auto it = tree_->find(key);
        return it == tree_->not_found() ? nullptr : &it->second.data();
    }

    std::string path(const std::string& key) const { return name_ + "." + key; }

    void real(const std::string& key, double& v)
    {
        if (const auto* s = find(key))
            v = to_double(path(key), *s);
    }

    template <class Int>
    void integer(const std::string& key, Int& v)
    {
        if (const auto* s = find(key))
            v = to_integer<Int>(path(key), *s);
    }

    void flag(const std::string& key, bool& v)
    {
        if (const auto* s = find(key))
            v = to_bool(path(key), *s);
    }

    void range(const std::string& key, Range& r)
    {
        real(key + "_min", r.lo);
        real(key + "_max", r.hi);
    }

    void list(const std::string& key, std::vector<double>& v)
    {
        if (const auto* s = find(key))
            v = to_list(path(key), *s);
    }

    void reject_unknown() const
    {
        if (!tree_)
            return;
        for (const auto& [k, _] : *tree_)
            if (!seen_.count(k))
                throw ConfigError("unknown config key '" + path(k) + "'");
    }

private:
    std::string name_;
    const pt::ptree* tree_ = nullptr;
    std::set<std::string> seen_;
};

} // namespace detail

inline ToolkitConfig config_from_ini(const std::string& text)
{
    namespace pt = boost::property_tree;
    pt::ptree root;
    try {
        std::istringstream in(text);
        pt::read_ini(in, root);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    // read_ini drops empty sections, so headers are checked on the raw text.
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
        const auto b = line.find_first_not_of(" \t");
        if (b == std::string::npos || line[b] != '[')
            continue;
        const auto e = line.find(']', b);
        const auto name = line.substr(b + 1, e == std::string::npos ? std::string::npos : e - b - 1);
        if (name != "solver" && name != "space" && name != "ga" && name != "data")
            throw ConfigError("unknown config section '" + name + "'");
    }

    ToolkitConfig c;

    detail::Section solver(root, "solver");
    solver.integer("station_count", c.solver.station_count);
    solver.integer("max_iterations", c.solver.max_iterations);
    solver.real("relaxation", c.solver.relaxation);
    solver.real("tolerance", c.solver.tolerance);
    solver.real("density", c.solver.density);
    solver.reject_unknown();

    detail::Section space(root, "space");
    auto& s = c.space;
    space.range("thrust", s.thrust);
    space.range("speed", s.speed);
    space.range("rpm", s.rpm);
    space.range("diameter", s.diameter);
    space.range("hub_ratio", s.hub_ratio);
    space.range("chord_root", s.chord_root_range);
    space.range("taper_exp", s.taper_exp_range);
    if (const auto* v = space.find("blade_counts")) {
        s.blade_counts.clear();
        for (auto f : detail::split_fields(*v, ','))
            s.blade_counts.push_back(detail::to_integer<int>(space.path("blade_counts"), f));
    }
    if (const auto* v = space.find("chord_catalog")) {
        // entries "chord_root:taper_exp" separated by commas
        s.chord_catalog.clear();
        for (auto f : detail::split_fields(*v, ',')) {
            const auto parts = detail::split_fields(f, ':');
            if (parts.size() != 2)
                throw ConfigError("config key 'space.chord_catalog': entries must be chord_root:taper_exp");
            s.chord_catalog.push_back({detail::to_double(space.path("chord_catalog"), parts[0]),
                                       detail::to_double(space.path("chord_catalog"), parts[1])});
        }
    }
    space.list("diameter_levels", s.diameter_levels);
    space.list("hub_ratio_levels", s.hub_ratio_levels);
    space.flag("chord_catalog_only", s.chord_catalog_only);
    space.real("section_drag_coeff", s.section_drag_coeff);
    space.integer("rng_seed", s.rng_seed);
    space.reject_unknown();

    detail::Section ga(root, "ga");
    ga.integer("population_size", c.ga.population_size);
    ga.integer("eval_budget", c.ga.eval_budget);
    ga.integer("tournament_size", c.ga.tournament_size);
    ga.real("crossover_prob", c.ga.crossover_prob);
    ga.real("mutation_prob", c.ga.mutation_prob);
    ga.real("mutation_sigma_frac", c.ga.mutation_sigma_frac);
    ga.integer("elite_count", c.ga.elite_count);
    ga.integer("rng_seed", c.ga.rng_seed);
    ga.reject_unknown();

    detail::Section data(root, "data");
    data.integer("count", c.data.count);
    data.real("floor", c.data.efficiency_floor);
    data.real("test_fraction", c.data.test_fraction);
    data.integer("trees", c.data.tree_count);
    data.integer("split_seed", c.data.split_seed);
    data.integer("forest_seed", c.data.forest_seed);
    data.reject_unknown();

    c.validate();
    return c;
}

/// Canonical text: every key, fixed order, round-trip exact numbers.
inline std::string config_to_ini(const ToolkitConfig& c)
{
    using detail::fmt_double;
    std::ostringstream o;
    o << "[solver]\n"
      << "station_count=" << c.solver.station_count << "\n"
      << "max_iterations=" << c.solver.max_iterations << "\n"
      << "relaxation=" << fmt_double(c.solver.relaxation) << "\n"
      << "tolerance=" << fmt_double(c.solver.tolerance) << "\n"
      << "density=" << fmt_double(c.solver.density) << "\n\n";

    const auto& s = c.space;
    auto range = [&](const char* key, const Range& r) {
        o << key << "_min=" << fmt_double(r.lo) << "\n" << key << "_max=" << fmt_double(r.hi) << "\n";
    };
    o << "[space]\n";
    range("thrust", s.thrust);
    range("speed", s.speed);
    range("rpm", s.rpm);
    range("diameter", s.diameter);
    range("hub_ratio", s.hub_ratio);
    range("chord_root", s.chord_root_range);
    range("taper_exp", s.taper_exp_range);
    o << "blade_counts=";
    for (std::size_t i = 0; i < s.blade_counts.size(); ++i)
        o << (i ? "," : "") << s.blade_counts[i];
    o << "\nchord_catalog=";
    for (std::size_t i = 0; i < s.chord_catalog.size(); ++i)
        o << (i ? "," : "") << fmt_double(s.chord_catalog[i].chord_root) << ":"
          << fmt_double(s.chord_catalog[i].taper_exp);
    o << "\ndiameter_levels=" << detail::fmt_list(s.diameter_levels) << "\n"
      << "hub_ratio_levels=" << detail::fmt_list(s.hub_ratio_levels) << "\n"
      << "chord_catalog_only=" << (s.chord_catalog_only ? "true" : "false") << "\n"
      << "section_drag_coeff=" << fmt_double(s.section_drag_coeff) << "\n"
      << "rng_seed=" << s.rng_seed << "\n\n";

    o << "[ga]\n"
      << "population_size=" << c.ga.population_size << "\n"
      << "eval_budget=" << c.ga.eval_budget << "\n"
      << "tournament_size=" << c.ga.tournament_size << "\n"
      << "crossover_prob=" << fmt_double(c.ga.crossover_prob) << "\n"
      << "mutation_prob=" << fmt_double(c.ga.mutation_prob) << "\n"
      << "mutation_sigma_frac=" << fmt_double(c.ga.mutation_sigma_frac) << "\n"
      << "elite_count=" << c.ga.elite_count << "\n"
      << "rng_seed=" << c.ga.rng_seed << "\n\n";

    o << "[data]\n"
      << "count=" << c.data.count << "\n"
      << "floor=" << fmt_double(c.data.efficiency_floor) << "\n"
      << "test_fraction=" << fmt_double(c.data.test_fraction) << "\n"
      << "trees=" << c.data.tree_count << "\n"
      << "split_seed=" << c.data.split_seed << "\n"
      << "forest_seed=" << c.data.forest_seed << "\n";
    return o.str();
}

/// Hash of the canonical text; parallelism settings are not part of it.
inline std::uint64_t config_hash(const ToolkitConfig& c)
{
    auto copy = c;
    copy.ga.jobs = 1;
    Fnv1a h;
    h.text(config_to_ini(copy));
    return h.value();
}

inline ToolkitConfig load_config(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return config_from_ini(buf.str());
}

inline void save_config(const ToolkitConfig& c, const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + path + "' for writing");
    out << config_to_ini(c);
}

} // namespace propsao
