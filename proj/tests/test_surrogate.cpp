#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace propsao;
using testing_support::fresh_dir;
using testing_support::synthetic_dataset;
using testing_support::synthetic_record;

namespace {

DesignRecord record(double thrust, double speed, double rpm, double diameter, double eta)
{
    DesignRecord r;
    r.requirement = {thrust, speed, rpm};
    r.geometry.diameter = diameter;
    r.geometry.hub_diameter = 0.2 * diameter;
    r.efficiency = eta;
    return r;
}

std::vector<Requirement> probes(std::size_t n, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<Requirement> out;
    const auto c = default_config();
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(sample_requirement(c, rng));
    return out;
}

// Sum of squared standardized deviations from the mean.
double sse(const Dataset& ds, const std::vector<std::uint32_t>& rows, const TargetVector& scales)
{
    TargetVector mean{};
    for (auto id : rows) {
        const auto t = target_of(ds.records[id]);
        for (std::size_t o = 0; o < kOutputCount; ++o)
            mean[o] += t[o] / scales[o];
    }
    for (auto& m : mean)
        m /= static_cast<double>(rows.size());
    double s = 0.0;
    for (auto id : rows) {
        const auto t = target_of(ds.records[id]);
        for (std::size_t o = 0; o < kOutputCount; ++o) {
            const double d = t[o] / scales[o] - mean[o];
            s += d * d;
        }
    }
    return s;
}

} // namespace

TEST(FitTree, SingleRecordIsOneLeaf)
{
    Dataset ds;
    ds.records.push_back(record(1e5, 10, 1000, 1.5, 0.6));
    const auto tree = fit_tree(ds);
    ASSERT_EQ(tree.nodes.size(), 1u);
    EXPECT_TRUE(tree.nodes[0].is_leaf());
    EXPECT_EQ(tree.predict({1, 1, 1}), target_of(ds.records[0]));
}

TEST(FitTree, IdenticalInputsShareALeaf)
{
    Dataset ds;
    ds.records.push_back(record(1e5, 10, 1000, 1.0, 0.6));
    ds.records.push_back(record(1e5, 10, 1000, 2.0, 0.8));
    const auto tree = fit_tree(ds);
    ASSERT_EQ(tree.nodes.size(), 1u);
    const auto& leaf = tree.nodes[0];
    EXPECT_EQ(leaf.member_ids.size(), 2u);
    EXPECT_DOUBLE_EQ(leaf.mean_target[0], 1.5);
    EXPECT_DOUBLE_EQ(leaf.mean_target[kEtaOutput], 0.7);
}

TEST(FitTree, DistinctThrustSplitsAtMidpoint)
{
    Dataset ds;
    ds.records.push_back(record(1e5, 10, 1000, 1.0, 0.6));
    ds.records.push_back(record(3e5, 10, 1000, 2.0, 0.8));
    const auto tree = fit_tree(ds);
    ASSERT_EQ(tree.nodes.size(), 3u);
    EXPECT_EQ(tree.nodes[0].feature, 0);
    EXPECT_DOUBLE_EQ(tree.nodes[0].threshold, 2e5);
    EXPECT_TRUE(tree.nodes[1].is_leaf());
    EXPECT_TRUE(tree.nodes[2].is_leaf());
    EXPECT_EQ(tree.predict(ds.records[0].requirement), target_of(ds.records[0]));
    EXPECT_EQ(tree.predict(ds.records[1].requirement), target_of(ds.records[1]));
}

TEST(FitTree, TieBreaksOnLowestFeature)
{
    // Both thrust and speed separate the two records equally well.
    Dataset ds;
    ds.records.push_back(record(1e5, 8, 1000, 1.0, 0.6));
    ds.records.push_back(record(3e5, 12, 1000, 2.0, 0.8));
    EXPECT_EQ(fit_tree(ds).nodes[0].feature, 0);
}

TEST(FitTree, EmptyDataIsTrainingError)
{
    EXPECT_THROW(fit_tree(Dataset{}), TrainingError);
    Dataset one;
    one.records.push_back(record(1e5, 10, 1000, 1.0, 0.6));
    EXPECT_THROW(fit_forest(one, 5, 1), TrainingError);
}

TEST(FitTree, MemorizesDistinctRequirements)
{
    const auto ds = synthetic_dataset(2000, 21);
    const auto tree = fit_tree(ds);
    for (const auto& r : ds.records)
        ASSERT_EQ(tree.predict(r.requirement), target_of(r));
    const auto rep = evaluate_model(tree, ds);
    EXPECT_EQ(rep.accuracy, 1.0);
    EXPECT_EQ(rep.mean_residual, 0.0);
}

TEST(FitTree, EverySplitReducesStandardizedError)
{
    const auto ds = synthetic_dataset(400, 22);
    const auto scales = output_scales_of(ds);
    const auto tree = fit_tree(ds);

    // Route every training row and collect node membership.
    std::vector<std::vector<std::uint32_t>> members(tree.nodes.size());
    for (std::uint32_t id = 0; id < ds.size(); ++id) {
        const auto x = features_of(ds.records[id].requirement);
        std::size_t i = 0;
        for (;;) {
            members[i].push_back(id);
            const auto& n = tree.nodes[i];
            if (n.is_leaf())
                break;
            i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
        }
    }
    std::size_t leaves = 0;
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        const auto& n = tree.nodes[i];
        if (n.is_leaf()) {
            ++leaves;
            EXPECT_EQ(members[i].size(), 1u);
            continue;
        }
        const auto& l = members[static_cast<std::size_t>(n.left)];
        const auto& r = members[static_cast<std::size_t>(n.right)];
        ASSERT_FALSE(l.empty());
        ASSERT_FALSE(r.empty());
        EXPECT_GT(sse(ds, members[i], scales) - sse(ds, l, scales) - sse(ds, r, scales), 0.0);
    }
    EXPECT_EQ(leaves, ds.size());
}

TEST(FitForest, SingleTreeWithoutBootstrapEqualsTree)
{
    const auto ds = synthetic_dataset(300, 3);
    ForestOptions opt;
    opt.bootstrap = false;
    const auto forest = fit_forest(ds, 1, 5, opt);
    const auto tree = fit_tree(ds);
    for (const auto& q : probes(100, 4))
        EXPECT_EQ(forest.predict(q), tree.predict(q));
}

TEST(FitForest, DeterministicUnderSeedAndParallelism)
{
    const auto ds = synthetic_dataset(300, 3);
    ForestOptions serial, threaded;
    threaded.jobs = 4;
    const auto a = fit_forest(ds, 12, 77, serial);
    const auto b = fit_forest(ds, 12, 77, threaded);
    for (const auto& q : probes(100, 5))
        EXPECT_EQ(a.predict(q), b.predict(q));
    std::ostringstream sa, sb;
    save_model(a, sa);
    save_model(b, sb);
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(FitForest, DefaultSizeIsHundred)
{
    EXPECT_EQ(DataConfig{}.tree_count, 100u);
}

TEST(PredictForest, MeanOfTrees)
{
    const auto ds = synthetic_dataset(500, 6);
    const auto forest = fit_forest(ds, 25, 8);
    for (const auto& q : probes(100, 9)) {
        const auto p = predict_forest(forest, q);
        for (std::size_t o = 0; o < kOutputCount; ++o) {
            double sum = 0.0, lo = 1e300, hi = -1e300;
            for (const auto& t : forest.trees) {
                const double v = t.predict(q)[o];
                sum += v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            const double mean = sum / static_cast<double>(forest.trees.size());
            EXPECT_LE(std::abs(p[o] - mean), 1e-12 * std::abs(mean));
            EXPECT_GE(p[o], lo * (1 - 1e-12));
            EXPECT_LE(p[o], hi * (1 + 1e-12));
        }
    }
}

TEST(PredictForest, IdenticalTreesGiveSingleTreePrediction)
{
    const auto ds = synthetic_dataset(200, 10);
    ForestOptions opt;
    opt.bootstrap = false;
    const auto forest = fit_forest(ds, 4, 1, opt);
    for (const auto& q : probes(50, 11))
        for (std::size_t o = 0; o < kOutputCount; ++o)
            EXPECT_DOUBLE_EQ(forest.predict(q)[o], forest.trees[0].predict(q)[o]);
}

TEST(LeafRecords, TrainingRequirementReturnsItsRecord)
{
    const auto ds = synthetic_dataset(1000, 12);
    const auto tree = fit_tree(ds);
    for (const auto& r : ds.records) {
        const auto recs = leaf_records(tree, r.requirement, ds);
        ASSERT_FALSE(recs.empty());
        EXPECT_NE(std::find(recs.begin(), recs.end(), r), recs.end());
    }
}

TEST(LeafRecords, BetweenClustersReturnsOneLeaf)
{
    Dataset ds;
    ds.records.push_back(record(1e5, 10, 1000, 1.0, 0.6));
    ds.records.push_back(record(1.1e5, 10, 1000, 1.1, 0.62));
    ds.records.push_back(record(4e5, 10, 1000, 3.0, 0.8));
    ds.records.push_back(record(4.1e5, 10, 1000, 3.1, 0.82));
    const auto tree = fit_tree(ds);
    const auto recs = leaf_records(tree, {2.5e5, 10, 1000}, ds);
    ASSERT_FALSE(recs.empty());
    const auto& leaf = tree.leaf({2.5e5, 10, 1000});
    EXPECT_EQ(recs.size(), leaf.member_ids.size());
}

TEST(LeafRecords, DuplicateInputsAllReturned)
{
    Dataset ds;
    ds.records.push_back(record(2e5, 12, 900, 1.0, 0.6));
    ds.records.push_back(record(2e5, 12, 900, 1.4, 0.7));
    ds.records.push_back(record(2e5, 12, 900, 1.8, 0.8));
    ds.records.push_back(record(4e5, 12, 900, 3.0, 0.5));
    const auto tree = fit_tree(ds);
    const auto recs = leaf_records(tree, {2e5, 12, 900}, ds);
    ASSERT_EQ(recs.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_NE(std::find(recs.begin(), recs.end(), ds.records[i]), recs.end());
}

TEST(LeafRecords, FingerprintMismatch)
{
    const auto ds = synthetic_dataset(50, 13);
    const auto tree = fit_tree(ds);
    auto other = ds;
    other.records[0].efficiency = 0.5001;
    EXPECT_THROW(leaf_records(tree, ds.records[0].requirement, other), ModelDataMismatch);
}

TEST(Metrics, Residual)
{
    EXPECT_NEAR(residual(0.8, 0.76), 0.05, 1e-15);
    EXPECT_EQ(residual(0.9, 0.9), 0.0);
    EXPECT_NEAR(residual(0.5, 0.6), -0.2, 1e-15);
    EXPECT_THROW(residual(0.0, 0.5), EvaluationError);
}

TEST(Metrics, AccuracyStrictThreshold)
{
    EXPECT_EQ(summarize_residuals({0.04, 0.06}).accuracy, 0.5);
    EXPECT_EQ(summarize_residuals({0.05, -0.05}).accuracy, 0.0);
    EXPECT_NEAR(summarize_residuals({0.04, 0.06}).mean_residual, 0.05, 1e-15);
    EXPECT_THROW(summarize_residuals({}), EvaluationError);
}

TEST(Metrics, EvaluateModel)
{
    const auto ds = synthetic_dataset(100, 14);
    const auto tree = fit_tree(ds);
    EXPECT_EQ(evaluate_model(tree, ds).accuracy, 1.0);
    EXPECT_THROW(evaluate_model(tree, Dataset{}), EvaluationError);
}

TEST(DecodeTarget, RoundsBladeCountAndClamps)
{
    const auto c = default_config();
    TargetVector t{1.5, 0.2, 0.12, 1.3, 4.4, 0.7};
    auto [g, eta] = decode_target(t, c);
    EXPECT_EQ(g.blade_count, 4);
    EXPECT_DOUBLE_EQ(g.diameter, 1.5);
    EXPECT_DOUBLE_EQ(g.hub_diameter, 0.3);
    EXPECT_EQ(eta, 0.7);
    t[4] = 5.6;
    t[0] = 10.0;
    std::tie(g, eta) = decode_target(t, c);
    EXPECT_EQ(g.blade_count, 6);
    EXPECT_EQ(g.diameter, 4.0);
}

TEST(ModelFile, ForestRoundTrip)
{
    const auto ds = synthetic_dataset(300, 15);
    const auto forest = fit_forest(ds, 7, 3);
    const auto dir = fresh_dir("model");
    const auto path = (dir / "f.txt").string();
    save_model(forest, path);
    const auto back = load_forest(path);
    EXPECT_EQ(back.bootstrap_seeds, forest.bootstrap_seeds);
    EXPECT_EQ(back.output_scales, forest.output_scales);
    EXPECT_EQ(back.training_fingerprint, forest.training_fingerprint);
    for (const auto& q : probes(100, 16))
        EXPECT_EQ(back.predict(q), forest.predict(q));
}

TEST(ModelFile, TreeRoundTripKeepsMembers)
{
    const auto ds = synthetic_dataset(300, 17);
    const auto tree = fit_tree(ds);
    std::ostringstream out;
    save_model(tree, output_scales_of(ds), out);
    const auto back = tree_from_text(out.str());
    ASSERT_EQ(back.nodes.size(), tree.nodes.size());
    for (std::size_t i = 0; i < tree.nodes.size(); ++i)
        EXPECT_EQ(back.nodes[i].member_ids, tree.nodes[i].member_ids);
    for (const auto& q : probes(100, 18))
        EXPECT_EQ(leaf_records(back, q, ds), leaf_records(tree, q, ds));
}

TEST(ModelFile, TruncatedFileIsRejected)
{
    const auto ds = synthetic_dataset(100, 19);
    std::ostringstream out;
    save_model(fit_forest(ds, 3, 1), out);
    const auto text = out.str();
    for (std::size_t cut : {text.size() - 4, text.size() / 2, std::size_t{10}})
        EXPECT_THROW(forest_from_text(text.substr(0, cut)), FormatError);
}

TEST(ModelFile, VersionAndKindChecks)
{
    const auto ds = synthetic_dataset(50, 20);
    std::ostringstream out;
    save_model(fit_forest(ds, 2, 1), out);
    auto text = out.str();
    EXPECT_THROW(tree_from_text(text), FormatError);
    text.replace(text.find("propsao-model 1"), 15, "propsao-model 9");
    try {
        forest_from_text(text);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
    }
}

TEST(ModelFile, EmptyTreeIsSchemaError)
{
    const std::string text = "propsao-model 1\nkind tree\nfingerprint 0000000000000001\n"
                             "output_scales 1 1 1 1 1 1\ntrees 1\ntree 0 0\nend\n";
    try {
        tree_from_text(text);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("schema"), std::string::npos);
    }
}

TEST(ModelFile, BackwardChildLinkRejected)
{
    const std::string text = "propsao-model 1\nkind tree\nfingerprint 0000000000000001\n"
                             "output_scales 1 1 1 1 1 1\ntrees 1\ntree 0 3\nI 0 5 1 2\nI 0 5 1 2\n"
                             "L 1 0.2 0.1 1 4 0.5 1 0\nend\n";
    EXPECT_THROW(tree_from_text(text), FormatError);
}
