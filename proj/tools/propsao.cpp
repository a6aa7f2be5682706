// propsao: data generation, surrogate training, GA/SAO optimization and
// GA-vs-SAO comparison from one config file.

#include "propsao/propsao.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace propsao;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::vector<std::string> g_argv;

struct UsageError : Error {
    using Error::Error;
};

class Manifest {
public:
    explicit Manifest(std::string command) : start_(std::chrono::steady_clock::now())
    {
        doc_["command"] = std::move(command);
        doc_["tool_version"] = kToolVersion;
        doc_["argv"] = g_argv;
    }

    json& operator[](const char* key) { return doc_[key]; }

    void write(const std::string& path)
    {
        doc_["wall_time_s"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot open '" + path + "' for writing");
        out << doc_.dump(2) << "\n";
    }

private:
    json doc_;
    std::chrono::steady_clock::time_point start_;
};

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + path + "' for writing");
    out << text;
}

json geometry_json(const BladeGeometry& g)
{
    return json{{"blade_count", g.blade_count},   {"diameter_m", g.diameter},     {"hub_diameter_m", g.hub_diameter},
                {"chord_root", g.chord_root},     {"taper_exp", g.taper_exp},     {"cd", g.section_drag_coeff}};
}

json requirement_json(const Requirement& r)
{
    return json{{"thrust_n", r.thrust_req}, {"speed_mps", r.ship_speed}, {"rpm", r.rpm}};
}

Requirement parse_requirement(const std::string& text)
{
    const auto f = detail::split_fields(text, ',');
    if (f.size() != 3)
        throw UsageError("--requirement expects THRUST,SPEED,RPM");
    Requirement r;
    try {
        r.thrust_req = detail::parse_double(f[0], 1);
        r.ship_speed = detail::parse_double(f[1], 1);
        r.rpm = detail::parse_double(f[2], 1);
    } catch (const FormatError&) {
        throw UsageError("--requirement expects three numbers, got '" + text + "'");
    }
    try {
        r.validate();
    } catch (const Error& e) {
        throw UsageError(std::string("--requirement: ") + e.what());
    }
    return r;
}

// CSV with header thrust_n,speed_mps,rpm
std::vector<Requirement> load_requirements(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open '" + path + "' for reading");
    std::vector<Requirement> out;
    std::string line;
    std::size_t n = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty() || line[0] == '#')
            continue;
        if (!header) {
            if (line != "thrust_n,speed_mps,rpm")
                throw FormatError("schema error: expected header 'thrust_n,speed_mps,rpm' in '" + path + "'");
            header = true;
            continue;
        }
        const auto f = detail::split_fields(line, ',');
        if (f.size() != 3)
            throw FormatError("line " + std::to_string(n) + ": expected 3 fields");
        Requirement r{detail::parse_double(f[0], n), detail::parse_double(f[1], n), detail::parse_double(f[2], n)};
        try {
            r.validate();
        } catch (const Error& e) {
            throw FormatError("line " + std::to_string(n) + ": " + e.what());
        }
        out.push_back(r);
    }
    if (out.empty())
        throw FormatError("no requirements in '" + path + "'");
    return out;
}

ToolkitConfig config_or_default(const std::string& path)
{
    return path.empty() ? ToolkitConfig{} : load_config(path);
}

void ensure_parent(const std::string& path)
{
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty())
        fs::create_directories(parent);
}

struct Models {
    RandomForest forest;
    RegressionTree tree;
    Dataset data;
};

Models load_models(const std::string& forest, const std::string& tree, const std::string& data)
{
    if (forest.empty() || tree.empty() || data.empty())
        throw UsageError("SAO needs --forest, --tree and --data");
    Models m{load_forest(forest), load_tree(tree), load(data)};
    if (m.tree.training_fingerprint != fingerprint(m.data))
        throw ModelDataMismatch("tree '" + tree + "' was not trained on '" + data + "'");
    return m;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
    std::string config, out;
    std::optional<std::size_t> count;
    std::optional<double> floor;
    std::optional<std::uint64_t> seed;
    unsigned jobs = default_jobs();
};

int cmd_gen_data(const GenDataArgs& a)
{
    Manifest manifest("gen-data");
    auto cfg = config_or_default(a.config);
    if (a.count)
        cfg.data.count = *a.count;
    if (a.floor)
        cfg.data.efficiency_floor = *a.floor;
    if (a.seed)
        cfg.space.rng_seed = *a.seed;
    cfg.validate();

    ensure_parent(a.out);
    GenerationStats stats;
    const auto ds = generate(cfg.space, cfg.data.count, cfg.data.efficiency_floor, a.jobs, cfg.solver, &stats);
    save(ds, a.out);

    std::cout << "kept " << stats.kept << " of " << stats.attempts << " attempts (" << stats.feasible
              << " feasible) -> " << a.out << "\n";

    manifest["config"] = a.config;
    manifest["config_hash"] = hex64(config_hash(cfg));
    manifest["seeds"] = json{{"space", cfg.space.rng_seed}};
    manifest["parameters"] = json{{"count", cfg.data.count}, {"floor", cfg.data.efficiency_floor}, {"jobs", a.jobs}};
    manifest["inputs"] = json::array();
    manifest["outputs"] = json::array({a.out});
    manifest["result"] = json{{"attempts", stats.attempts}, {"feasible", stats.feasible}, {"kept", stats.kept},
                              {"dataset_fingerprint", hex64(fingerprint(ds))}};
    manifest.write(a.out + ".manifest.json");
    return 0;
}

struct TrainArgs {
    std::string config, data, out_forest, out_tree, report;
    std::optional<std::size_t> trees;
    std::optional<double> test_frac;
    std::optional<std::uint64_t> seed;
    unsigned jobs = default_jobs();
};

int cmd_train(const TrainArgs& a)
{
    Manifest manifest("train");
    auto cfg = config_or_default(a.config);
    if (a.trees)
        cfg.data.tree_count = *a.trees;
    if (a.test_frac)
        cfg.data.test_fraction = *a.test_frac;
    if (a.seed)
        cfg.data.split_seed = cfg.data.forest_seed = *a.seed;
    cfg.validate();

    const auto ds = load(a.data);
    if (ds.size() < 2)
        throw TrainingError("training needs at least 2 records");
    auto [train, test] = split(ds, cfg.data.test_fraction, cfg.data.split_seed);
    if (test.empty() || train.size() < 2)
        throw TrainingError("test fraction leaves an empty train or test split");

    ForestOptions fopt;
    fopt.jobs = a.jobs;
    const auto forest = fit_forest(train, cfg.data.tree_count, cfg.data.forest_seed, fopt);
    // The seeding tree memorizes the whole corpus.
    TreeOptions topt;
    topt.output_scales = output_scales_of(ds);
    const auto tree = fit_tree(ds, topt);

    const auto forest_report = evaluate_model(forest, test);
    const auto tree_train_report = evaluate_model(tree, ds);

    ensure_parent(a.out_forest);
    ensure_parent(a.out_tree);
    save_model(forest, a.out_forest);
    save_model(tree, *topt.output_scales, a.out_tree);

    const std::string report_path = a.report.empty() ? a.out_forest + ".report.json" : a.report;
    json report{{"records", ds.size()},
                {"train_records", train.size()},
                {"test_records", test.size()},
                {"trees", cfg.data.tree_count},
                {"forest_test_accuracy", forest_report.accuracy},
                {"forest_test_mean_residual", forest_report.mean_residual},
                {"tree_train_accuracy", tree_train_report.accuracy},
                {"tree_train_mean_residual", tree_train_report.mean_residual},
                {"accuracy_threshold", kAccuracyThreshold}};
    ensure_parent(report_path);
    write_text(report_path, report.dump(2) + "\n");
    std::cout << "forest test accuracy " << forest_report.accuracy << " (mean residual "
              << forest_report.mean_residual << ", " << test.size() << " test records)\n"
              << "tree training accuracy " << tree_train_report.accuracy << " (mean residual "
              << tree_train_report.mean_residual << ")\n";

    manifest["config"] = a.config;
    manifest["config_hash"] = hex64(config_hash(cfg));
    manifest["seeds"] = json{{"split", cfg.data.split_seed}, {"forest", cfg.data.forest_seed}};
    manifest["parameters"] = json{{"trees", cfg.data.tree_count}, {"test_fraction", cfg.data.test_fraction},
                                  {"jobs", a.jobs}};
    manifest["inputs"] = json::array({a.data});
    manifest["outputs"] = json::array({a.out_forest, a.out_tree, report_path});
    manifest["result"] = report;
    manifest.write(a.out_forest + ".manifest.json");
    return 0;
}

struct OptimizeArgs {
    std::string config, method = "ga", requirement, forest, tree, data, trace_out, summary_out;
    std::optional<std::size_t> budget;
    std::optional<std::uint64_t> seed;
    unsigned jobs = default_jobs();
};

int cmd_optimize(const OptimizeArgs& a)
{
    Manifest manifest("optimize");
    const bool sao = a.method == "sao";
    if (sao && (a.forest.empty() || a.tree.empty() || a.data.empty()))
        throw UsageError("--method sao requires --forest, --tree and --data");
    auto cfg = config_or_default(a.config);
    if (a.budget)
        cfg.ga.eval_budget = *a.budget;
    if (a.seed)
        cfg.ga.rng_seed = *a.seed;
    cfg.ga.jobs = a.jobs;
    cfg.validate();
    const auto req = parse_requirement(a.requirement);

    OptimizationResult result;
    if (sao) {
        const auto m = load_models(a.forest, a.tree, a.data);
        result = run_sao(req, m.forest, m.tree, m.data, cfg.ga, cfg.space, cfg.solver);
    } else {
        result = run_ga(req, {}, cfg.ga, cfg.space, cfg.solver);
    }

    ensure_parent(a.trace_out);
    save_trace(result.trace, cfg.ga.rng_seed, a.trace_out);
    json summary{{"method", to_string(result.trace.method)},
                 {"requirement", requirement_json(req)},
                 {"seed", cfg.ga.rng_seed},
                 {"evaluations", result.evaluations_used},
                 {"best_eta", result.best_efficiency},
                 {"first_population_best_eta", result.first_population_best()},
                 {"best_geometry", result.best_geometry ? geometry_json(*result.best_geometry) : json(nullptr)}};
    const std::string summary_path = a.summary_out.empty() ? a.trace_out + ".summary.json" : a.summary_out;
    ensure_parent(summary_path);
    write_text(summary_path, summary.dump(2) + "\n");
    std::cout << to_string(result.trace.method) << " best eta " << result.best_efficiency << " after "
              << result.evaluations_used << " evaluations\n";

    manifest["config"] = a.config;
    manifest["config_hash"] = hex64(config_hash(cfg));
    manifest["seeds"] = json{{"ga", cfg.ga.rng_seed}};
    manifest["parameters"] = json{{"method", a.method}, {"requirement", a.requirement},
                                  {"budget", cfg.ga.eval_budget}, {"jobs", a.jobs}};
    manifest["inputs"] = sao ? json::array({a.forest, a.tree, a.data}) : json::array();
    manifest["outputs"] = json::array({a.trace_out, summary_path});
    manifest.write(a.trace_out + ".manifest.json");
    return 0;
}

struct CompareArgs {
    std::string config, requirements_file, forest, tree, data, out_dir;
    std::optional<std::size_t> sample, budget;
    std::size_t repeats = 3;
    std::uint64_t seed = 1;
    unsigned jobs = default_jobs();
};

int cmd_compare(const CompareArgs& a)
{
    Manifest manifest("compare");
    if (a.requirements_file.empty() == !a.sample)
        throw UsageError("compare needs exactly one of --requirements-file or --sample");
    if (a.repeats == 0)
        throw UsageError("--repeats must be positive");
    auto cfg = config_or_default(a.config);
    if (a.budget)
        cfg.ga.eval_budget = *a.budget;
    cfg.ga.jobs = a.jobs;
    cfg.validate();
    const auto m = load_models(a.forest, a.tree, a.data);

    std::vector<Requirement> reqs;
    if (a.sample) {
        Rng rng(derive_seed(a.seed, 0x5eed));
        for (std::size_t i = 0; i < *a.sample; ++i)
            reqs.push_back(sample_requirement(cfg.space, rng));
    } else {
        reqs = load_requirements(a.requirements_file);
    }

    fs::create_directories(a.out_dir);
    std::string table = "requirement_index,thrust_n,speed_mps,rpm,repeat,seed,ga_best,sao_best,"
                        "ga_first_population_best,sao_first_population_best,winner\n";
    json pairs = json::array();
    json seeds = json::array();
    json outputs = json::array();
    std::size_t n = 0, final_wins = 0, seed_wins = 0;
    for (std::size_t i = 0; i < reqs.size(); ++i) {
        for (std::size_t r = 0; r < a.repeats; ++r) {
            // Both methods share the seed of the pair.
            GaConfig ga = cfg.ga;
            ga.rng_seed = derive_seed(a.seed, i * a.repeats + r);
            seeds.push_back(ga.rng_seed);
            const auto g = run_ga(reqs[i], {}, ga, cfg.space, cfg.solver);
            const auto s = run_sao(reqs[i], m.forest, m.tree, m.data, ga, cfg.space, cfg.solver);

            const std::string stem = "req" + std::to_string(i) + "_rep" + std::to_string(r);
            for (const auto* res : {&g, &s}) {
                const auto path = (fs::path(a.out_dir) / (stem + "_" + to_string(res->trace.method) + ".csv")).string();
                save_trace(res->trace, ga.rng_seed, path);
                outputs.push_back(path);
            }

            const char* winner = s.best_efficiency > g.best_efficiency   ? "SAO"
                                 : s.best_efficiency < g.best_efficiency ? "GA"
                                                                         : "tie";
            ++n;
            final_wins += s.best_efficiency >= g.best_efficiency;
            seed_wins += s.first_population_best() >= g.first_population_best();

            std::string row = std::to_string(i) + ",";
            detail::append_double(row, reqs[i].thrust_req);
            row += ",";
            detail::append_double(row, reqs[i].ship_speed);
            row += ",";
            detail::append_double(row, reqs[i].rpm);
            row += "," + std::to_string(r) + "," + std::to_string(ga.rng_seed) + ",";
            detail::append_double(row, g.best_efficiency);
            row += ",";
            detail::append_double(row, s.best_efficiency);
            row += ",";
            detail::append_double(row, g.first_population_best());
            row += ",";
            detail::append_double(row, s.first_population_best());
            row += std::string(",") + winner + "\n";
            table += row;

            pairs.push_back(json{{"requirement", requirement_json(reqs[i])},
                                 {"repeat", r},
                                 {"seed", ga.rng_seed},
                                 {"ga_best", g.best_efficiency},
                                 {"sao_best", s.best_efficiency},
                                 {"ga_first_population_best", g.first_population_best()},
                                 {"sao_first_population_best", s.first_population_best()},
                                 {"winner", winner}});
            std::cout << stem << ": GA " << g.best_efficiency << "  SAO " << s.best_efficiency << "  -> " << winner
                      << "\n";
        }
    }

    const auto table_path = (fs::path(a.out_dir) / "summary.csv").string();
    const auto summary_path = (fs::path(a.out_dir) / "summary.json").string();
    write_text(table_path, table);
    const double win_rate = static_cast<double>(final_wins) / static_cast<double>(n);
    const double seed_rate = static_cast<double>(seed_wins) / static_cast<double>(n);
    json summary{{"pairs", n},
                 {"budget", cfg.ga.eval_budget},
                 {"sao_final_not_worse", final_wins},
                 {"win_rate", win_rate},
                 {"sao_first_population_not_worse", seed_wins},
                 {"first_population_win_rate", seed_rate},
                 {"results", pairs}};
    write_text(summary_path, summary.dump(2) + "\n");
    outputs.push_back(table_path);
    outputs.push_back(summary_path);
    std::cout << "SAO final best >= GA in " << final_wins << "/" << n << " pairs (win rate " << win_rate
              << "); first population " << seed_wins << "/" << n << "\n";

    manifest["config"] = a.config;
    manifest["config_hash"] = hex64(config_hash(cfg));
    manifest["seeds"] = json{{"base", a.seed}, {"pairs", seeds}};
    manifest["parameters"] = json{{"budget", cfg.ga.eval_budget}, {"repeats", a.repeats},
                                  {"requirements_file", a.requirements_file},
                                  {"sample", a.sample ? json(*a.sample) : json(nullptr)}, {"jobs", a.jobs}};
    manifest["inputs"] = json::array({a.forest, a.tree, a.data});
    manifest["outputs"] = outputs;
    manifest.write((fs::path(a.out_dir) / "manifest.json").string());
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    g_argv.assign(argv, argv + argc);
    CLI::App app{"Propeller design toolkit: lifting-line solver, inverse surrogates, GA and SAO"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate a labeled design dataset");
    gen_cmd->add_option("-c,--config", gen.config, "Config file")->check(CLI::ExistingFile);
    gen_cmd->add_option("--count", gen.count, "Records to keep");
    gen_cmd->add_option("--floor", gen.floor, "Efficiency floor");
    gen_cmd->add_option("--seed", gen.seed, "Sampling seed");
    gen_cmd->add_option("-j,--jobs", gen.jobs, "Worker threads")->check(CLI::PositiveNumber);
    gen_cmd->add_option("-o,--out", gen.out, "Output CSV")->required();

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Fit the forest and the seeding tree");
    train_cmd->add_option("-c,--config", train.config, "Config file")->check(CLI::ExistingFile);
    train_cmd->add_option("-d,--data", train.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--trees", train.trees, "Forest size");
    train_cmd->add_option("--test-frac", train.test_frac, "Held-out fraction");
    train_cmd->add_option("--seed", train.seed, "Split and bootstrap seed");
    train_cmd->add_option("--out-forest", train.out_forest, "Forest model path")->required();
    train_cmd->add_option("--out-tree", train.out_tree, "Tree model path")->required();
    train_cmd->add_option("--report", train.report, "Report JSON path");
    train_cmd->add_option("-j,--jobs", train.jobs, "Worker threads")->check(CLI::PositiveNumber);

    OptimizeArgs opt;
    auto* opt_cmd = app.add_subcommand("optimize", "Run GA or SAO for one requirement");
    opt_cmd->add_option("-c,--config", opt.config, "Config file")->check(CLI::ExistingFile);
    opt_cmd->add_option("--method", opt.method, "ga or sao")->check(CLI::IsMember({"ga", "sao"}));
    opt_cmd->add_option("--requirement", opt.requirement, "THRUST,SPEED,RPM")->required();
    opt_cmd->add_option("--budget", opt.budget, "Simulator calls");
    opt_cmd->add_option("--seed", opt.seed, "GA seed");
    opt_cmd->add_option("--forest", opt.forest, "Forest model (sao)");
    opt_cmd->add_option("--tree", opt.tree, "Tree model (sao)");
    opt_cmd->add_option("--data", opt.data, "Dataset the tree was trained on (sao)");
    opt_cmd->add_option("--trace-out", opt.trace_out, "Trace CSV path")->required();
    opt_cmd->add_option("--summary-out", opt.summary_out, "Summary JSON path");
    opt_cmd->add_option("-j,--jobs", opt.jobs, "Worker threads")->check(CLI::PositiveNumber);

    CompareArgs cmp;
    auto* cmp_cmd = app.add_subcommand("compare", "GA vs SAO at equal budget");
    cmp_cmd->add_option("-c,--config", cmp.config, "Config file")->check(CLI::ExistingFile);
    cmp_cmd->add_option("--requirements-file", cmp.requirements_file, "CSV thrust_n,speed_mps,rpm")
        ->check(CLI::ExistingFile);
    cmp_cmd->add_option("--sample", cmp.sample, "Sample N requirements instead");
    cmp_cmd->add_option("--budget", cmp.budget, "Simulator calls per run");
    cmp_cmd->add_option("--repeats", cmp.repeats, "Seeded repeats per requirement");
    cmp_cmd->add_option("--seed", cmp.seed, "Base seed");
    cmp_cmd->add_option("--forest", cmp.forest, "Forest model")->required();
    cmp_cmd->add_option("--tree", cmp.tree, "Tree model")->required();
    cmp_cmd->add_option("--data", cmp.data, "Dataset the tree was trained on")->required();
    cmp_cmd->add_option("--out-dir", cmp.out_dir, "Output directory")->required();
    cmp_cmd->add_option("-j,--jobs", cmp.jobs, "Worker threads")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*gen_cmd)
            return cmd_gen_data(gen);
        if (*train_cmd)
            return cmd_train(train);
        if (*opt_cmd)
            return cmd_optimize(opt);
        return cmd_compare(cmp);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
