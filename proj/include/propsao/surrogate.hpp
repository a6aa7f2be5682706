#pragma once

// Inverse surrogate R -> (G, eta): a multi-output regression tree grown to
// pure leaves (the memory map of the corpus) and a bagged forest of such
// trees (the interpolating regressor), plus residual/accuracy metrics and a
// line-oriented text model format.

#include "propsao/common.hpp"
#include "propsao/dataset.hpp"
#include "propsao/design_space.hpp"
#include "propsao/hydro.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace propsao {

inline constexpr std::size_t kFeatureCount = 3; // thrust, speed, rpm
inline constexpr std::size_t kOutputCount = 6;  // diameter, hub_ratio, chord_root, taper_exp, blade_count, eta
inline constexpr std::size_t kEtaOutput = 5;
inline constexpr int kModelFormatVersion = 1;

using Features = std::array<double, kFeatureCount>;
using TargetVector = std::array<double, kOutputCount>;

inline Features features_of(const Requirement& r) noexcept
{
    return {r.thrust_req, r.ship_speed, r.rpm};
}

inline TargetVector target_of(const DesignRecord& rec) noexcept
{
    const auto& g = rec.geometry;
    return {g.diameter,  g.hub_diameter / g.diameter, g.chord_root,
            g.taper_exp, static_cast<double>(g.blade_count), rec.efficiency};
}

/// Geometry and efficiency encoded in a target vector. Blade count is
/// rounded to the nearest allowed value; genes are clamped by the space.
inline std::pair<BladeGeometry, double> decode_target(const TargetVector& t, const DesignSpaceConfig& space)
{
    Genome g;
    g.values = {t[0], t[1], t[2], t[3]};
    std::size_t best = 0;
    for (std::size_t i = 1; i < space.blade_counts.size(); ++i)
        if (std::abs(space.blade_counts[i] - t[4]) < std::abs(space.blade_counts[best] - t[4]))
            best = i;
    g.blade_index = best;
    return {decode(g, space), t[kEtaOutput]};
}

struct TreeNode {
    // Internal: feature >= 0, rows with x[feature] <= threshold go left.
    int feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    // Leaf
    TargetVector mean_target{};
    std::vector<std::uint32_t> member_ids;

    bool is_leaf() const noexcept { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes; // nodes[0] is the root
    std::uint64_t training_fingerprint = 0;

    std::size_t leaf_index(const Features& x) const
    {
        std::size_t i = 0;
        while (!nodes[i].is_leaf()) {
            const auto& n = nodes[i];
            i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
        }
        return i;
    }

    const TreeNode& leaf(const Requirement& r) const { return nodes[leaf_index(features_of(r))]; }
    TargetVector predict(const Requirement& r) const { return leaf(r).mean_target; }
};

struct RandomForest {
    std::vector<RegressionTree> trees;
    std::vector<std::uint64_t> bootstrap_seeds;
    TargetVector output_scales{};
    std::uint64_t training_fingerprint = 0;

    /// Mean of the per-tree leaf means.
    TargetVector predict(const Requirement& r) const
    {
        TargetVector sum{};
        for (const auto& t : trees) {
            const auto& p = t.leaf(r).mean_target;
            for (std::size_t o = 0; o < kOutputCount; ++o)
                sum[o] += p[o];
        }
        for (auto& v : sum)
            v /= static_cast<double>(trees.size());
        return sum;
    }
};

struct TreeOptions {
    // Per-output standardization; computed from the training data when unset.
    std::optional<TargetVector> output_scales;
};

/// Population standard deviation of each output over the dataset (1 where constant).
inline TargetVector output_scales_of(const Dataset& data)
{
    TargetVector mean{};
    TargetVector scale{};
    const double n = static_cast<double>(data.size());
    for (const auto& r : data.records) {
        const auto t = target_of(r);
        for (std::size_t o = 0; o < kOutputCount; ++o)
            mean[o] += t[o];
    }
    for (auto& m : mean)
        m /= n;
    for (const auto& r : data.records) {
        const auto t = target_of(r);
        for (std::size_t o = 0; o < kOutputCount; ++o)
            scale[o] += (t[o] - mean[o]) * (t[o] - mean[o]);
    }
    for (auto& s : scale) {
        s = std::sqrt(s / n);
        if (!(s > 0.0))
            s = 1.0;
    }
    return scale;
}

namespace detail {

class TreeBuilder {
public:
    TreeBuilder(const Dataset& data, const TargetVector& scales)
    {
        const std::size_t n = data.size();
        x_.resize(n);
        raw_.resize(n);
        z_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            x_[i] = features_of(data.records[i].requirement);
            raw_[i] = target_of(data.records[i]);
            for (std::size_t o = 0; o < kOutputCount; ++o)
                z_[i][o] = raw_[i][o] / scales[o];
        }
    }

    /// Grows a tree on the given multiset of row ids.
    RegressionTree build(std::vector<std::uint32_t> rows) const
    {
        RegressionTree tree;
        struct Work {
            std::size_t node;
            std::vector<std::uint32_t> rows;
        };
        std::vector<Work> stack;
        tree.nodes.emplace_back();
        stack.push_back({0, std::move(rows)});

        std::vector<std::uint32_t> sorted;
        while (!stack.empty()) {
            Work w = std::move(stack.back());
            stack.pop_back();

            const auto split = best_split(w.rows, sorted);
            if (!split) {
                make_leaf(tree.nodes[w.node], w.rows);
                continue;
            }

            std::vector<std::uint32_t> left;
            std::vector<std::uint32_t> right;
            for (auto id : w.rows)
                (x_[id][split->feature] <= split->threshold ? left : right).push_back(id);

            const auto li = tree.nodes.size();
            tree.nodes.emplace_back();
            const auto ri = tree.nodes.size();
            tree.nodes.emplace_back();
            auto& node = tree.nodes[w.node];
            node.feature = static_cast<int>(split->feature);
            node.threshold = split->threshold;
            node.left = static_cast<std::int32_t>(li);
            node.right = static_cast<std::int32_t>(ri);
            // Right first so the left subtree is expanded first (depth-first, left-to-right ids).
            stack.push_back({ri, std::move(right)});
            stack.push_back({li, std::move(left)});
        }
        return tree;
    }

private:
    struct Split {
        std::size_t feature;
        double threshold;
    };

    bool pure(const std::vector<std::uint32_t>& rows) const
    {
        for (auto id : rows)
            if (raw_[id] != raw_[rows.front()])
                return false;
        return true;
    }

    bool inputs_identical(const std::vector<std::uint32_t>& rows) const
    {
        for (auto id : rows)
            if (x_[id] != x_[rows.front()])
                return false;
        return true;
    }

    // Largest decrease in summed standardized squared error; for a binary
    // split this is n_l*n_r/n * |mean_l - mean_r|^2. Ties keep the lowest
    // feature index, then the lowest threshold.
    std::optional<Split> best_split(const std::vector<std::uint32_t>& rows, std::vector<std::uint32_t>& sorted) const
    {
        if (rows.size() < 2 || pure(rows) || inputs_identical(rows))
            return std::nullopt;

        const std::size_t n = rows.size();
        TargetVector total{};
        for (auto id : rows)
            for (std::size_t o = 0; o < kOutputCount; ++o)
                total[o] += z_[id][o];

        std::optional<Split> best;
        double best_gain = 0.0;
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            sorted = rows;
            std::sort(sorted.begin(), sorted.end(), [&](std::uint32_t a, std::uint32_t b) {
                return x_[a][f] < x_[b][f] || (x_[a][f] == x_[b][f] && a < b);
            });
            TargetVector left{};
            for (std::size_t k = 0; k + 1 < n; ++k) {
                const auto id = sorted[k];
                for (std::size_t o = 0; o < kOutputCount; ++o)
                    left[o] += z_[id][o];
                const double lo = x_[id][f];
                const double hi = x_[sorted[k + 1]][f];
                if (!(lo < hi))
                    continue;
                const double nl = static_cast<double>(k + 1);
                const double nr = static_cast<double>(n - k - 1);
                double diff2 = 0.0;
                for (std::size_t o = 0; o < kOutputCount; ++o) {
                    const double d = left[o] / nl - (total[o] - left[o]) / nr;
                    diff2 += d * d;
                }
                const double gain = nl * nr / static_cast<double>(n) * diff2;
                if (gain > best_gain) {
                    double thr = lo + 0.5 * (hi - lo);
                    if (!(thr >= lo && thr < hi))
                        thr = lo;
                    best_gain = gain;
                    best = Split{f, thr};
                }
            }
        }
        return best;
    }

    void make_leaf(TreeNode& node, const std::vector<std::uint32_t>& rows) const
    {
        node.member_ids = rows;
        if (pure(rows)) {
            node.mean_target = raw_[rows.front()];
            return;
        }
        TargetVector sum{};
        for (auto id : rows)
            for (std::size_t o = 0; o < kOutputCount; ++o)
                sum[o] += raw_[id][o];
        for (std::size_t o = 0; o < kOutputCount; ++o)
            node.mean_target[o] = sum[o] / static_cast<double>(rows.size());
    }

    std::vector<Features> x_;
    std::vector<TargetVector> raw_;
    std::vector<TargetVector> z_;
};

} // namespace detail

/// Tree grown until every leaf is pure (identical targets) or holds
/// indistinguishable requirements.
inline RegressionTree fit_tree(const Dataset& data, const TreeOptions& options = {})
{
    if (data.empty())
        throw TrainingError("cannot fit a tree on an empty dataset");
    const auto scales = options.output_scales.value_or(output_scales_of(data));
    detail::TreeBuilder builder(data, scales);
    std::vector<std::uint32_t> rows(data.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        rows[i] = static_cast<std::uint32_t>(i);
    auto tree = builder.build(std::move(rows));
    tree.training_fingerprint = fingerprint(data);
    return tree;
}

struct ForestOptions {
    bool bootstrap = true; // false trains every tree on the full data (test hook)
    unsigned jobs = 1;
};

/// Bagged ensemble: tree t is grown on a with-replacement resample of size
/// |data| drawn from its own stream derive_seed(seed, t).
inline RandomForest fit_forest(const Dataset& data, std::size_t tree_count, std::uint64_t seed,
                               const ForestOptions& options = {})
{
    if (data.size() < 2)
        throw TrainingError("forest training needs at least 2 records");
    if (tree_count < 1)
        throw TrainingError("tree count must be at least 1");

    RandomForest forest;
    forest.output_scales = output_scales_of(data);
    forest.training_fingerprint = fingerprint(data);
    forest.trees.resize(tree_count);
    forest.bootstrap_seeds.resize(tree_count);
    for (std::size_t t = 0; t < tree_count; ++t)
        forest.bootstrap_seeds[t] = derive_seed(seed, t);

    const detail::TreeBuilder builder(data, forest.output_scales);
    const std::size_t n = data.size();
    parallel_for(tree_count, options.jobs, [&](std::size_t t) {
        std::vector<std::uint32_t> rows(n);
        if (options.bootstrap) {
            Rng rng(forest.bootstrap_seeds[t]);
            for (auto& r : rows)
                r = static_cast<std::uint32_t>(uniform_index(rng, n));
        } else {
            for (std::size_t i = 0; i < n; ++i)
                rows[i] = static_cast<std::uint32_t>(i);
        }
        forest.trees[t] = builder.build(std::move(rows));
        forest.trees[t].training_fingerprint = forest.training_fingerprint;
    });
    return forest;
}

inline TargetVector predict_forest(const RandomForest& model, const Requirement& req)
{
    return model.predict(req);
}

/// Every training record stored in the leaf `req` routes to.
inline std::vector<DesignRecord> leaf_records(const RegressionTree& tree, const Requirement& req, const Dataset& data)
{
    if (tree.training_fingerprint != fingerprint(data))
        throw ModelDataMismatch("tree was not trained on this dataset (fingerprint mismatch)");
    std::vector<DesignRecord> out;
    for (auto id : tree.leaf(req).member_ids) {
        if (id >= data.size())
            throw ModelDataMismatch("leaf references a record outside the dataset");
        out.push_back(data.records[id]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics

/// Relative efficiency residual (truth - predicted) / truth.
inline double residual(double eta_truth, double eta_pred)
{
    if (!(eta_truth > 0.0))
        throw EvaluationError("residual needs a positive true efficiency");
    return (eta_truth - eta_pred) / eta_truth;
}

inline constexpr double kAccuracyThreshold = 0.05;

struct EvalReport {
    std::vector<double> residuals;
    double accuracy = 0.0; // fraction with |residual| < 0.05
    double mean_residual = 0.0;
};

inline EvalReport summarize_residuals(std::vector<double> residuals)
{
    if (residuals.empty())
        throw EvaluationError("no residuals to summarize");
    EvalReport rep;
    std::size_t hits = 0;
    double sum = 0.0;
    for (double r : residuals) {
        if (std::abs(r) < kAccuracyThreshold)
            ++hits;
        sum += r;
    }
    rep.accuracy = static_cast<double>(hits) / static_cast<double>(residuals.size());
    rep.mean_residual = sum / static_cast<double>(residuals.size());
    rep.residuals = std::move(residuals);
    return rep;
}

template <typename Model>
EvalReport evaluate_model(const Model& model, const Dataset& test)
{
    if (test.empty())
        throw EvaluationError("empty test set");
    std::vector<double> res;
    res.reserve(test.size());
    for (const auto& r : test.records) {
        if (!(r.efficiency > 0.0))
            continue;
        res.push_back(residual(r.efficiency, model.predict(r.requirement)[kEtaOutput]));
    }
    return summarize_residuals(std::move(res));
}

// ---------------------------------------------------------------------------
// Model files
//
//   propsao-model <version>
//   kind forest|tree
//   fingerprint <16 hex digits>
//   output_scales <6 numbers>
//   trees <count>
//   seeds <seed per tree>              (forest only)
//   tree <index> <node count>
//   I <feature> <threshold> <left> <right>
//   L <6 mean targets> <member count> <member ids...>
//   ...
//   end

namespace detail {

inline void write_trees(std::ostream& out, std::string_view kind, std::span<const RegressionTree> trees,
                        const TargetVector& scales, std::uint64_t fp, std::span<const std::uint64_t> seeds)
{
    std::string line;
    auto flush = [&] {
        line.push_back('\n');
        out.write(line.data(), static_cast<std::streamsize>(line.size()));
        line.clear();
    };
    line = "propsao-model " + std::to_string(kModelFormatVersion);
    flush();
    line = "kind ";
    line += kind;
    flush();
    line = "fingerprint " + hex64(fp);
    flush();
    line = "output_scales";
    for (double s : scales) {
        line.push_back(' ');
        append_double(line, s);
    }
    flush();
    line = "trees " + std::to_string(trees.size());
    flush();
    if (!seeds.empty()) {
        line = "seeds";
        for (auto s : seeds)
            line += " " + std::to_string(s);
        flush();
    }
    for (std::size_t t = 0; t < trees.size(); ++t) {
        line = "tree " + std::to_string(t) + " " + std::to_string(trees[t].nodes.size());
        flush();
        for (const auto& n : trees[t].nodes) {
            if (!n.is_leaf()) {
                line = "I " + std::to_string(n.feature) + " ";
                append_double(line, n.threshold);
                line += " " + std::to_string(n.left) + " " + std::to_string(n.right);
            } else {
                line = "L";
                for (double v : n.mean_target) {
                    line.push_back(' ');
                    append_double(line, v);
                }
                line += " " + std::to_string(n.member_ids.size());
                for (auto id : n.member_ids)
                    line += " " + std::to_string(id);
            }
            flush();
        }
    }
    line = "end";
    flush();
}

class ModelReader {
public:
    explicit ModelReader(std::string text) : text_(std::move(text)) {}

    std::vector<std::string_view> next_line()
    {
        if (pos_ >= text_.size())
            throw FormatError("model file truncated after line " + std::to_string(line_));
        auto end = text_.find('\n', pos_);
        if (end == std::string::npos)
            throw FormatError("model file truncated at line " + std::to_string(line_ + 1));
        std::string_view line(text_.data() + pos_, end - pos_);
        pos_ = end + 1;
        ++line_;
        std::vector<std::string_view> tokens;
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && line[i] == ' ')
                ++i;
            std::size_t j = i;
            while (j < line.size() && line[j] != ' ')
                ++j;
            if (j > i)
                tokens.push_back(line.substr(i, j - i));
            i = j;
        }
        return tokens;
    }

    std::vector<std::string_view> expect(std::string_view keyword, std::size_t min_tokens)
    {
        auto t = next_line();
        if (t.empty() || t[0] != keyword || t.size() < min_tokens)
            fail("expected '" + std::string(keyword) + "'");
        return t;
    }

    template <typename Int>
    Int integer(std::string_view s)
    {
        Int v{};
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size())
            fail("malformed integer '" + std::string(s) + "'");
        return v;
    }

    std::uint64_t hex(std::string_view s)
    {
        std::uint64_t v{};
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
        if (s.size() != 16 || ec != std::errc{} || ptr != s.data() + s.size())
            fail("malformed fingerprint '" + std::string(s) + "'");
        return v;
    }

    double real(std::string_view s)
    {
        double v{};
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size())
            fail("malformed number '" + std::string(s) + "'");
        return v;
    }

    [[noreturn]] void fail(const std::string& what) const
    {
        throw FormatError("model file line " + std::to_string(line_) + ": " + what);
    }

    bool at_end() const noexcept { return pos_ >= text_.size(); }

private:
    std::string text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 0;
};

struct ParsedModel {
    std::string kind;
    std::uint64_t fingerprint = 0;
    TargetVector scales{};
    std::vector<std::uint64_t> seeds;
    std::vector<RegressionTree> trees;
};

inline ParsedModel read_trees(std::string text)
{
    ModelReader in(std::move(text));
    ParsedModel m;

    auto head = in.expect("propsao-model", 2);
    if (in.integer<int>(head[1]) != kModelFormatVersion)
        in.fail("unsupported model format version " + std::string(head[1]));
    m.kind = std::string(in.expect("kind", 2)[1]);
    if (m.kind != "forest" && m.kind != "tree")
        in.fail("unknown model kind '" + m.kind + "'");
    m.fingerprint = in.hex(in.expect("fingerprint", 2)[1]);
    auto sc = in.expect("output_scales", 1 + kOutputCount);
    for (std::size_t o = 0; o < kOutputCount; ++o)
        m.scales[o] = in.real(sc[1 + o]);
    const auto count = in.integer<std::size_t>(in.expect("trees", 2)[1]);
    if (count == 0)
        in.fail("model has no trees");
    if (m.kind == "forest") {
        auto s = in.expect("seeds", 1 + count);
        for (std::size_t t = 0; t < count; ++t)
            m.seeds.push_back(in.integer<std::uint64_t>(s[1 + t]));
    }

    m.trees.resize(count);
    for (std::size_t t = 0; t < count; ++t) {
        auto th = in.expect("tree", 3);
        if (in.integer<std::size_t>(th[1]) != t)
            in.fail("tree index out of sequence");
        const auto n_nodes = in.integer<std::size_t>(th[2]);
        if (n_nodes == 0)
            in.fail("schema error: empty tree");
        auto& tree = m.trees[t];
        tree.nodes.resize(n_nodes);
        for (std::size_t idx = 0; idx < n_nodes; ++idx) {
            auto& node = tree.nodes[idx];
            auto tok = in.next_line();
            if (tok.empty())
                in.fail("empty node line");
            if (tok[0] == "I" && tok.size() == 5) {
                node.feature = in.integer<int>(tok[1]);
                node.threshold = in.real(tok[2]);
                node.left = in.integer<std::int32_t>(tok[3]);
                node.right = in.integer<std::int32_t>(tok[4]);
                if (node.feature < 0 || node.feature >= static_cast<int>(kFeatureCount))
                    in.fail("feature index out of range");
                // Children always follow their parent, which also rules out cycles.
                if (node.left <= 0 || node.right <= 0 || static_cast<std::size_t>(node.left) <= idx
                    || static_cast<std::size_t>(node.right) <= idx || static_cast<std::size_t>(node.left) >= n_nodes
                    || static_cast<std::size_t>(node.right) >= n_nodes)
                    in.fail("child index out of range");
            } else if (tok[0] == "L" && tok.size() >= 2 + kOutputCount) {
                for (std::size_t o = 0; o < kOutputCount; ++o)
                    node.mean_target[o] = in.real(tok[1 + o]);
                const auto k = in.integer<std::size_t>(tok[1 + kOutputCount]);
                if (k == 0 || tok.size() != 2 + kOutputCount + k)
                    in.fail("leaf member list malformed");
                node.member_ids.resize(k);
                for (std::size_t j = 0; j < k; ++j)
                    node.member_ids[j] = in.integer<std::uint32_t>(tok[2 + kOutputCount + j]);
            } else {
                in.fail("malformed node");
            }
        }
    }
    in.expect("end", 1);
    return m;
}

inline std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open '" + path + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::ofstream open_for_write(const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + path + "' for writing");
    return out;
}

} // namespace detail

inline void save_model(const RandomForest& forest, std::ostream& out)
{
    detail::write_trees(out, "forest", forest.trees, forest.output_scales, forest.training_fingerprint,
                        forest.bootstrap_seeds);
}

inline void save_model(const RegressionTree& tree, const TargetVector& scales, std::ostream& out)
{
    detail::write_trees(out, "tree", std::span<const RegressionTree>(&tree, 1), scales, tree.training_fingerprint,
                        {});
}

inline void save_model(const RandomForest& forest, const std::string& path)
{
    auto out = detail::open_for_write(path);
    save_model(forest, out);
    if (!out)
        throw Error("write failed for '" + path + "'");
}

inline void save_model(const RegressionTree& tree, const TargetVector& scales, const std::string& path)
{
    auto out = detail::open_for_write(path);
    save_model(tree, scales, out);
    if (!out)
        throw Error("write failed for '" + path + "'");
}

inline RandomForest forest_from_text(std::string text)
{
    auto m = detail::read_trees(std::move(text));
    if (m.kind != "forest")
        throw FormatError("expected a forest model, found '" + m.kind + "'");
    RandomForest f;
    f.output_scales = m.scales;
    f.training_fingerprint = m.fingerprint;
    f.bootstrap_seeds = std::move(m.seeds);
    f.trees = std::move(m.trees);
    for (auto& t : f.trees)
        t.training_fingerprint = f.training_fingerprint;
    return f;
}

inline RegressionTree tree_from_text(std::string text)
{
    auto m = detail::read_trees(std::move(text));
    if (m.kind != "tree")
        throw FormatError("expected a tree model, found '" + m.kind + "'");
    auto t = std::move(m.trees.front());
    t.training_fingerprint = m.fingerprint;
    return t;
}

inline RandomForest load_forest(const std::string& path) { return forest_from_text(detail::read_file(path)); }
inline RegressionTree load_tree(const std::string& path) { return tree_from_text(detail::read_file(path)); }

} // namespace propsao
