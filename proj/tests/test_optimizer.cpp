#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace propsao;
using testing_support::grid81_designs;
using testing_support::grid81_space;
using testing_support::kGridRequirement;

namespace {

const Requirement kReq{51783.0, 7.5, 3551.0};

GaConfig small_ga(std::uint64_t seed, std::size_t budget = 100)
{
    GaConfig g;
    g.eval_budget = budget;
    g.rng_seed = seed;
    return g;
}

struct Surrogates {
    Dataset data;
    RandomForest forest;
    RegressionTree tree;
};

const Surrogates& surrogates()
{
    static const Surrogates s = [] {
        Surrogates out;
        out.data = generate(default_config(), 300, 0.5, 1);
        out.forest = fit_forest(out.data, 10, 1);
        out.tree = fit_tree(out.data);
        return out;
    }();
    return s;
}

} // namespace

TEST(GaConfig, Validation)
{
    GaConfig g;
    EXPECT_NO_THROW(g.validate());
    g.population_size = 1;
    EXPECT_THROW(g.validate(), ConfigError);
    g = {};
    g.eval_budget = 10;
    EXPECT_THROW(g.validate(), ConfigError);
    g = {};
    g.mutation_prob = 1.5;
    EXPECT_THROW(g.validate(), ConfigError);
    g = {};
    g.elite_count = 20;
    EXPECT_THROW(g.validate(), ConfigError);
}

TEST(RunGa, BudgetIsExact)
{
    for (std::size_t budget : {20u, 47u, 100u}) {
        const auto r = run_ga(kReq, {}, small_ga(3, budget), default_config());
        EXPECT_EQ(r.evaluations_used, budget);
        ASSERT_EQ(r.trace.entries.size(), budget);
        for (std::size_t i = 0; i < budget; ++i)
            EXPECT_EQ(r.trace.entries[i].evaluation_index, i + 1);
    }
}

TEST(RunGa, TraceIsMonotoneAndConsistent)
{
    const auto r = run_ga(kReq, {}, small_ga(4, 120), default_config());
    double best = 0.0, prev = 0.0;
    for (const auto& e : r.trace.entries) {
        best = std::max(best, e.candidate_efficiency);
        EXPECT_EQ(e.best_so_far, best);
        EXPECT_GE(e.best_so_far, prev);
        prev = e.best_so_far;
    }
    EXPECT_EQ(r.best_efficiency, best);
    ASSERT_TRUE(r.best_geometry);
    const auto perf = evaluate(*r.best_geometry, kReq);
    EXPECT_EQ(perf.efficiency, r.best_efficiency);
    EXPECT_EQ(r.trace.method, Method::GA);
}

TEST(RunGa, GenerationBestNeverDecreases)
{
    // Generation g's population best is the running best after its children are
    // evaluated, since elites keep the previous best.
    const auto cfg = small_ga(5, 200);
    const auto r = run_ga(kReq, {}, cfg, default_config());
    const std::size_t pop = cfg.population_size, kids = pop - cfg.elite_count;
    double prev_gen_best = 0.0;
    for (std::size_t end = pop; end <= r.trace.entries.size(); end += kids) {
        double gen_best = 0.0;
        for (std::size_t i = end - (end == pop ? pop : kids); i < end; ++i)
            gen_best = std::max(gen_best, r.trace.entries[i].candidate_efficiency);
        gen_best = std::max(gen_best, prev_gen_best); // elites
        EXPECT_GE(gen_best, prev_gen_best);
        EXPECT_EQ(gen_best, r.trace.entries[end - 1].best_so_far);
        prev_gen_best = gen_best;
    }
}

TEST(RunGa, ReproducibleUnderSeed)
{
    auto cfg = small_ga(6, 80);
    const auto a = run_ga(kReq, {}, cfg, default_config());
    cfg.jobs = 4;
    const auto b = run_ga(kReq, {}, cfg, default_config());
    EXPECT_EQ(a.trace.entries, b.trace.entries);
    EXPECT_EQ(trace_to_csv(a.trace, 6), trace_to_csv(b.trace, 6));
    const auto c = run_ga(kReq, {}, small_ga(7, 80), default_config());
    EXPECT_NE(a.trace.entries, c.trace.entries);
}

TEST(RunGa, SeedsFormTheFirstPopulation)
{
    const auto space = default_config();
    std::vector<BladeGeometry> seeds;
    Rng rng(2);
    for (int i = 0; i < 3; ++i)
        seeds.push_back(sample_geometry(space, rng));
    seeds.push_back(seeds[0]); // duplicate is dropped
    const auto r = run_ga(kReq, seeds, small_ga(8, 40), space);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto perf = evaluate(seeds[i], kReq);
        EXPECT_EQ(r.trace.entries[i].candidate_efficiency, perf.feasible ? perf.efficiency : 0.0);
    }
    // Slot 3 is a random genome, not the duplicate.
    const auto dup = evaluate(seeds[0], kReq);
    EXPECT_NE(r.trace.entries[3].candidate_efficiency, dup.efficiency);
}

TEST(RunGa, AllInfeasibleIsFlagged)
{
    auto space = default_config();
    space.diameter = {0.5, 0.55};
    const auto r = run_ga({5e7, 5.0, 500.0}, {}, small_ga(9, 40), space);
    EXPECT_EQ(r.evaluations_used, 40u);
    EXPECT_EQ(r.best_efficiency, 0.0);
    EXPECT_FALSE(r.best_geometry.has_value());
}

TEST(BruteForce, SingleDesign)
{
    BladeGeometry g;
    g.diameter = 1.2;
    g.hub_diameter = 0.24;
    const auto r = brute_force(kReq, {g});
    ASSERT_TRUE(r.best_geometry);
    EXPECT_EQ(*r.best_geometry, g);
    EXPECT_EQ(r.best_efficiency, evaluate(g, kReq).efficiency);
}

TEST(BruteForce, FirstOccurrenceWinsTies)
{
    BladeGeometry a;
    a.diameter = 1.2;
    a.hub_diameter = 0.24;
    BladeGeometry b = a;
    b.chord_root = 0.1;
    const auto ea = evaluate(a, kReq).efficiency;
    const auto eb = evaluate(b, kReq).efficiency;
    const auto& best = ea >= eb ? a : b;
    const auto& worse = ea >= eb ? b : a;
    const auto r = brute_force(kReq, {worse, best, best});
    EXPECT_EQ(r.trace.entries[1].best_so_far, r.best_efficiency);
    EXPECT_EQ(r.trace.entries[2].candidate_efficiency, r.best_efficiency);
    // The later duplicate never replaces the first.
    EXPECT_EQ(r.trace.entries[2].best_so_far, r.trace.entries[1].best_so_far);
    EXPECT_EQ(*r.best_geometry, best);
    EXPECT_THROW(brute_force(kReq, {}), ConfigError);
}

TEST(BruteForce, AllInfeasibleList)
{
    BladeGeometry g;
    g.diameter = 0.5;
    g.hub_diameter = 0.1;
    const auto r = brute_force({5e7, 5.0, 500.0}, {g, g});
    EXPECT_EQ(r.best_efficiency, 0.0);
    EXPECT_FALSE(r.best_geometry);
}

TEST(GridOracle, GaRecoversBruteForceOptimum)
{
    const auto space = grid81_space();
    const auto designs = grid81_designs(space);
    ASSERT_EQ(designs.size(), 81u);
    const auto oracle = brute_force(kGridRequirement, designs);
    ASSERT_TRUE(oracle.best_geometry);
    // The optimum is unique on this grid.
    int ties = 0;
    for (const auto& e : oracle.trace.entries)
        ties += e.candidate_efficiency == oracle.best_efficiency;
    ASSERT_EQ(ties, 1);

    const auto ga = run_ga(kGridRequirement, {}, small_ga(1, 2000), space);
    EXPECT_EQ(ga.best_efficiency, oracle.best_efficiency);
    ASSERT_TRUE(ga.best_geometry);
    EXPECT_EQ(ga.best_geometry->diameter, oracle.best_geometry->diameter);
    EXPECT_EQ(ga.best_geometry->chord_root, oracle.best_geometry->chord_root);
    EXPECT_EQ(ga.best_geometry->taper_exp, oracle.best_geometry->taper_exp);
}

TEST(SaoSeeds, LeafRecordPrecedesWeakerForestCandidate)
{
    // Tree corpus: one record at eta 0.72. Forest corpus: everything at eta 0.65.
    Rng rng(30);
    Dataset tree_data;
    auto rec = testing_support::synthetic_record(rng);
    rec.geometry.blade_count = 4;
    rec.efficiency = 0.72;
    tree_data.records.push_back(rec);
    auto other = testing_support::synthetic_record(rng);
    other.efficiency = 0.55;
    tree_data.records.push_back(other);

    auto forest_data = testing_support::synthetic_dataset(50, 31);
    for (auto& r : forest_data.records)
        r.efficiency = 0.65;

    const auto tree = fit_tree(tree_data);
    const auto forest = fit_forest(forest_data, 5, 1);
    const auto space = default_config();
    const auto seeds = sao_seeds(forest, tree, tree_data, rec.requirement, 20, space);
    ASSERT_GE(seeds.size(), 2u);
    EXPECT_EQ(seeds[0], rec.geometry);
    EXPECT_EQ(seeds[1], decode_target(forest.predict(rec.requirement), space).first);

    const auto one = sao_seeds(forest, tree, tree_data, rec.requirement, 1, space);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0], rec.geometry);
    EXPECT_THROW(sao_seeds(forest, tree, tree_data, rec.requirement, 0, space), ConfigError);
}

TEST(SaoSeeds, PoolAlwaysHoldsForestPrediction)
{
    const auto& s = surrogates();
    const auto space = default_config();
    Rng rng(32);
    for (int i = 0; i < 20; ++i) {
        const auto q = sample_requirement(space, rng);
        const auto seeds = sao_seeds(s.forest, s.tree, s.data, q, 50, space);
        const auto fg = decode_target(s.forest.predict(q), space).first;
        EXPECT_NE(std::find(seeds.begin(), seeds.end(), fg), seeds.end());
    }
}

TEST(SaoSeeds, FingerprintMismatch)
{
    const auto& s = surrogates();
    auto other = s.data;
    other.records.pop_back();
    EXPECT_THROW(sao_seeds(s.forest, s.tree, other, kReq, 5, default_config()), ModelDataMismatch);
}

TEST(RunSao, SameBudgetAsGaAndSeededStart)
{
    const auto& s = surrogates();
    const auto space = default_config();
    const auto cfg = small_ga(12, 60);
    const auto ga = run_ga(kReq, {}, cfg, space);
    const auto sao = run_sao(kReq, s.forest, s.tree, s.data, cfg, space);
    EXPECT_EQ(ga.evaluations_used, sao.evaluations_used);
    EXPECT_EQ(sao.trace.method, Method::SAO);

    const auto seeds = sao_seeds(s.forest, s.tree, s.data, kReq, cfg.population_size, space);
    const auto fg = decode_target(s.forest.predict(kReq), space).first;
    const auto pos = std::find(seeds.begin(), seeds.end(), fg) - seeds.begin();
    ASSERT_LT(static_cast<std::size_t>(pos), seeds.size());
    const auto perf = evaluate(fg, kReq);
    EXPECT_EQ(sao.trace.entries[static_cast<std::size_t>(pos)].candidate_efficiency,
              perf.feasible ? perf.efficiency : 0.0);
}

TEST(TraceCsv, Format)
{
    OptimizationTrace t;
    t.method = Method::SAO;
    t.requirement = kReq;
    t.entries = {{1, 0.25, 0.25}, {2, 0.0, 0.25}};
    EXPECT_EQ(trace_to_csv(t, 9), "# method=SAO requirement=51783,7.5,3551 seed=9\n"
                                  "eval_index,candidate_eta,best_so_far\n"
                                  "1,0.25,0.25\n2,0,0.25\n");
}
