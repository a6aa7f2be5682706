#pragma once

// Simulator-in-the-loop genetic algorithm over blade genomes, surrogate
// seeding (SAO), and an exhaustive oracle for small explicit design lists.
//
// Budgets count solver calls exactly: elites carry their fitness forward
// without re-evaluation, the last generation is truncated to the remaining
// budget, and infeasible designs score zero instead of being resampled.

#include "propsao/common.hpp"
#include "propsao/dataset.hpp"
#include "propsao/design_space.hpp"
#include "propsao/hydro.hpp"
#include "propsao/surrogate.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace propsao {

struct GaConfig {
    std::size_t population_size = 20;
    std::size_t eval_budget = 400;
    std::size_t tournament_size = 3;
    double crossover_prob = 0.9;
    double mutation_prob = 0.2; // per gene
    double mutation_sigma_frac = 0.1;
    std::size_t elite_count = 2;
    std::uint64_t rng_seed = 1;
    unsigned jobs = 1; // concurrent evaluations within a generation

    void validate() const
    {
        if (population_size < 2)
            throw ConfigError("GA population_size must be at least 2");
        if (eval_budget < population_size)
            throw ConfigError("GA eval_budget must be at least population_size");
        if (tournament_size < 1)
            throw ConfigError("GA tournament_size must be at least 1");
        if (!(crossover_prob >= 0.0 && crossover_prob <= 1.0) || !(mutation_prob >= 0.0 && mutation_prob <= 1.0))
            throw ConfigError("GA probabilities must lie in [0, 1]");
        if (!(mutation_sigma_frac >= 0.0))
            throw ConfigError("GA mutation_sigma_frac must be non-negative");
        if (elite_count >= population_size)
            throw ConfigError("GA elite_count must be below population_size");
    }

    friend bool operator==(const GaConfig&, const GaConfig&) = default;
};

enum class Method { GA, SAO };

inline const char* to_string(Method m) noexcept { return m == Method::GA ? "GA" : "SAO"; }

struct TraceEntry {
    std::size_t evaluation_index = 0; // 1-based
    double candidate_efficiency = 0.0;
    double best_so_far = 0.0;

    friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct OptimizationTrace {
    std::vector<TraceEntry> entries;
    Method method = Method::GA;
    Requirement requirement;
};

struct OptimizationResult {
    std::optional<BladeGeometry> best_geometry; // empty when nothing feasible was found
    double best_efficiency = 0.0;
    OptimizationTrace trace;
    std::size_t evaluations_used = 0;
    std::size_t first_population_size = 0;

    /// Best efficiency among the first population's evaluations.
    double first_population_best() const noexcept
    {
        const auto n = std::min(first_population_size, trace.entries.size());
        return n == 0 ? 0.0 : trace.entries[n - 1].best_so_far;
    }
};

namespace detail {

struct Individual {
    Genome genome;
    BladeGeometry geometry;
    double fitness = 0.0;
};

class Evaluator {
public:
    Evaluator(const Requirement& req, const SolverOptions& solver, std::size_t budget, unsigned jobs,
              OptimizationResult& result)
        : req_(req), solver_(solver), budget_(budget), jobs_(jobs), result_(result)
    {
    }

    std::size_t remaining() const noexcept { return budget_ - result_.evaluations_used; }

    /// Evaluates the batch in order; records one trace entry per call.
    void run(std::vector<Individual>& batch)
    {
        std::vector<double> eta(batch.size(), 0.0);
        parallel_for(batch.size(), jobs_, [&](std::size_t i) {
            const auto perf = evaluate(batch[i].geometry, req_, solver_);
            eta[i] = perf.feasible ? perf.efficiency : 0.0;
        });
        for (std::size_t i = 0; i < batch.size(); ++i) {
            batch[i].fitness = eta[i];
            record(batch[i].geometry, eta[i]);
        }
    }

private:
    void record(const BladeGeometry& g, double eta)
    {
        ++result_.evaluations_used;
        if (eta > result_.best_efficiency) {
            result_.best_efficiency = eta;
            result_.best_geometry = g;
        }
        result_.trace.entries.push_back({result_.evaluations_used, eta, result_.best_efficiency});
    }

    const Requirement& req_;
    const SolverOptions& solver_;
    std::size_t budget_;
    unsigned jobs_;
    OptimizationResult& result_;
};

inline std::size_t tournament(const std::vector<Individual>& pop, std::size_t size, Rng& rng)
{
    std::size_t best = uniform_index(rng, pop.size());
    for (std::size_t k = 1; k < size; ++k) {
        const std::size_t c = uniform_index(rng, pop.size());
        if (pop[c].fitness > pop[best].fitness || (pop[c].fitness == pop[best].fitness && c < best))
            best = c;
    }
    return best;
}

// BLX-alpha on the continuous genes; blade index inherited from either parent.
inline Genome blend(const Genome& a, const Genome& b, Rng& rng)
{
    constexpr double alpha = 0.5;
    Genome child;
    for (std::size_t i = 0; i < kGeneCount; ++i) {
        const double lo = std::min(a.values[i], b.values[i]);
        const double hi = std::max(a.values[i], b.values[i]);
        const double d = hi - lo;
        child.values[i] = uniform(rng, lo - alpha * d, hi + alpha * d);
    }
    child.blade_index = uniform01(rng) < 0.5 ? a.blade_index : b.blade_index;
    return child;
}

inline void mutate(Genome& g, const GaConfig& cfg, const DesignSpaceConfig& space, Rng& rng)
{
    for (std::size_t i = 0; i < kGeneCount; ++i)
        if (uniform01(rng) < cfg.mutation_prob)
            g.values[i] += cfg.mutation_sigma_frac * gene_range(space, i).width() * standard_normal(rng);
    if (uniform01(rng) < cfg.mutation_prob)
        g.blade_index = uniform_index(rng, space.blade_counts.size());
}

inline Individual make_individual(const Genome& genome, const DesignSpaceConfig& space)
{
    Individual ind;
    ind.geometry = decode(genome, space);
    ind.genome = encode(ind.geometry, space);
    return ind;
}

} // namespace detail

/// Generational GA: elitism, tournament selection, blend crossover, Gaussian
/// mutation (random reset for blade count). The initial population is the
/// deduplicated seeds topped up with random genomes.
inline OptimizationResult run_ga(const Requirement& req, const std::vector<BladeGeometry>& initial_seeds,
                                 const GaConfig& cfg, const DesignSpaceConfig& space,
                                 const SolverOptions& solver = {}, Method method = Method::GA)
{
    cfg.validate();
    space.validate();
    req.validate();

    OptimizationResult result;
    result.trace.method = method;
    result.trace.requirement = req;
    detail::Evaluator evaluator(req, solver, cfg.eval_budget, cfg.jobs, result);
    Rng rng(cfg.rng_seed);

    std::vector<detail::Individual> population;
    for (const auto& seed : initial_seeds) {
        if (population.size() == cfg.population_size)
            break;
        auto ind = detail::make_individual(encode(seed, space), space);
        const bool dup = std::any_of(population.begin(), population.end(),
                                     [&](const auto& p) { return p.geometry == ind.geometry; });
        if (!dup)
            population.push_back(std::move(ind));
    }
    while (population.size() < cfg.population_size)
        population.push_back(detail::make_individual(random_genome(space, rng), space));

    evaluator.run(population);
    result.first_population_size = population.size();

    const std::size_t n_elite = cfg.elite_count;
    while (evaluator.remaining() > 0) {
        std::stable_sort(population.begin(), population.end(),
                         [](const auto& a, const auto& b) { return a.fitness > b.fitness; });

        std::vector<detail::Individual> children;
        const std::size_t n_children = std::min(cfg.population_size - n_elite, evaluator.remaining());
        children.reserve(n_children);
        while (children.size() < n_children) {
            const auto& p1 = population[detail::tournament(population, cfg.tournament_size, rng)];
            const auto& p2 = population[detail::tournament(population, cfg.tournament_size, rng)];
            Genome child = uniform01(rng) < cfg.crossover_prob ? detail::blend(p1.genome, p2.genome, rng) : p1.genome;
            detail::mutate(child, cfg, space, rng);
            children.push_back(detail::make_individual(child, space));
        }
        evaluator.run(children);

        population.resize(n_elite);
        for (auto& c : children)
            population.push_back(std::move(c));
    }
    return result;
}

/// Initial designs from both surrogates, best predicted/stored efficiency first.
inline std::vector<BladeGeometry> sao_seeds(const RandomForest& forest, const RegressionTree& tree,
                                            const Dataset& train_data, const Requirement& req, std::size_t k,
                                            const DesignSpaceConfig& space)
{
    if (k < 1)
        throw ConfigError("seed count must be at least 1");

    struct Candidate {
        BladeGeometry geometry;
        double efficiency;
    };
    std::vector<Candidate> pool;
    const auto [forest_geom, forest_eta] = decode_target(forest.predict(req), space);
    pool.push_back({forest_geom, forest_eta});
    for (const auto& rec : leaf_records(tree, req, train_data))
        pool.push_back({rec.geometry, rec.efficiency});

    std::stable_sort(pool.begin(), pool.end(),
                     [](const Candidate& a, const Candidate& b) { return a.efficiency > b.efficiency; });

    std::vector<BladeGeometry> out;
    for (const auto& c : pool) {
        if (out.size() == k)
            break;
        if (std::find(out.begin(), out.end(), c.geometry) == out.end())
            out.push_back(c.geometry);
    }
    return out;
}

/// GA started from the surrogate seeds; seed evaluations count against the budget.
inline OptimizationResult run_sao(const Requirement& req, const RandomForest& forest, const RegressionTree& tree,
                                  const Dataset& train_data, const GaConfig& cfg, const DesignSpaceConfig& space,
                                  const SolverOptions& solver = {})
{
    const auto seeds = sao_seeds(forest, tree, train_data, req, cfg.population_size, space);
    return run_ga(req, seeds, cfg, space, solver, Method::SAO);
}

/// Evaluates every design; the first occurrence wins ties.
inline OptimizationResult brute_force(const Requirement& req, const std::vector<BladeGeometry>& designs,
                                      const SolverOptions& solver = {})
{
    if (designs.empty())
        throw ConfigError("brute_force needs at least one design");
    OptimizationResult result;
    result.trace.method = Method::GA;
    result.trace.requirement = req;
    for (const auto& g : designs) {
        const auto perf = evaluate(g, req, solver);
        const double eta = perf.feasible ? perf.efficiency : 0.0;
        ++result.evaluations_used;
        if (eta > result.best_efficiency) {
            result.best_efficiency = eta;
            result.best_geometry = g;
        }
        result.trace.entries.push_back({result.evaluations_used, eta, result.best_efficiency});
    }
    result.first_population_size = designs.size();
    return result;
}

// ---------------------------------------------------------------------------
// Trace CSV

inline std::string trace_to_csv(const OptimizationTrace& trace, std::uint64_t seed)
{
    std::string out = "# method=";
    out += to_string(trace.method);
    out += " requirement=";
    detail::append_double(out, trace.requirement.thrust_req);
    out.push_back(',');
    detail::append_double(out, trace.requirement.ship_speed);
    out.push_back(',');
    detail::append_double(out, trace.requirement.rpm);
    out += " seed=" + std::to_string(seed) + "\n";
    out += "eval_index,candidate_eta,best_so_far\n";
    for (const auto& e : trace.entries) {
        out += std::to_string(e.evaluation_index);
        out.push_back(',');
        detail::append_double(out, e.candidate_efficiency);
        out.push_back(',');
        detail::append_double(out, e.best_so_far);
        out.push_back('\n');
    }
    return out;
}

inline void save_trace(const OptimizationTrace& trace, std::uint64_t seed, const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + path + "' for writing");
    const auto text = trace_to_csv(trace, seed);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

} // namespace propsao
