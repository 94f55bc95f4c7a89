#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "moci/baselines.hpp"
#include "moci/environment.hpp"
#include "moci/inference.hpp"
#include "moci/io.hpp"
#include "moci/metrics.hpp"
#include "moci/presets.hpp"

namespace moci {

enum class Method { Moci, Mlci, SinglePref };

inline std::string method_name(Method m) {
    switch (m) {
    case Method::Moci: return "moci";
    case Method::Mlci: return "mlci";
    case Method::SinglePref: return "single";
    }
    throw std::logic_error("unreachable method");
}

inline Method method_from_name(const std::string& name) {
    if (name == "moci")
        return Method::Moci;
    if (name == "mlci")
        return Method::Mlci;
    if (name == "single")
        return Method::SinglePref;
    throw std::invalid_argument("unknown method '" + name +
                                "' (expected moci, mlci or single)");
}

// One full run: demo generation, inference, evaluation.
struct RunSpec {
    Method method = Method::Moci;
    int k = 2;                  // clusters; forced to 1 for mlci and single
    InferenceConfig inference;  // its seed field is overridden by `seed`
    std::uint64_t seed = 0;     // drives demo sampling and inference init
    int mlci_expert = 0;        // whose known weights the mlci baseline gets
};

struct RunOutput {
    std::vector<Trajectory> demos;
    MixtureModel model;
    Trace trace;
    ExperimentReport report;
    ReportRow row;
};

struct Evaluation {
    ExperimentReport report;
    ReportRow row;
};

/**
 * Scores a fitted model against the environment's ground truth: constraint
 * recovery over the whole grid, confusion metrics excluding start and goal,
 * the per-demonstration log-likelihood, and (when reference weights with a
 * matching cluster count are supplied) permutation-matched weight error.
 */
inline Evaluation evaluate_run(const Environment& env, const std::vector<Trajectory>& demos,
                               const MixtureModel& model, const std::string& method_label,
                               const InferenceConfig& cfg, double runtime_s,
                               const std::vector<PreferenceWeights>* truth_weights = nullptr) {
    Evaluation out;
    const ConfusionMetrics conf =
        confusion(env.true_constraints, model.constraints, {env.start, env.goal});
    out.report.cmse = cmse(env.true_constraints, model.constraints);
    out.report.precision = conf.precision;
    out.report.recall = conf.recall;
    out.report.f1 = conf.f1;
    out.report.fpr = conf.fpr;
    out.report.avg_ll = avg_log_likelihood(env, demos, model);
    if (truth_weights != nullptr && truth_weights->size() == model.weights.size())
        out.report.weight_error = weight_recovery(model.weights, *truth_weights).errors;
    out.report.runtime_s = runtime_s;
    out.report.config_digest = config_digest(cfg, model.K());
    out.report.seed = cfg.seed;

    out.row.method = method_label;
    out.row.seed = cfg.seed;
    out.row.n = env.n;
    out.row.horizon = env.horizon;
    out.row.demo_count = static_cast<int>(demos.size());
    out.row.k = model.K();
    out.row.d_dkl = cfg.d_dkl;
    out.row.cmse = out.report.cmse;
    out.row.precision = out.report.precision;
    out.row.recall = out.report.recall;
    out.row.f1 = out.report.f1;
    out.row.fpr = out.report.fpr;
    out.row.avg_ll = out.report.avg_ll;
    if (out.report.weight_error.empty()) {
        out.row.weight_error_mean = std::nan("");
    } else {
        double sum = 0.0;
        for (double e : out.report.weight_error)
            sum += e;
        out.row.weight_error_mean = sum / static_cast<double>(out.report.weight_error.size());
    }
    out.row.runtime_s = out.report.runtime_s;
    out.row.config_digest = out.report.config_digest;
    return out;
}

/**
 * Generates seeded demonstrations from the experts, runs the selected
 * method, and evaluates the result against the environment's ground truth.
 * Only the inference call is timed. Weight-recovery error is reported when
 * the learned cluster count matches the expert count; the known-weight
 * baseline never reports it.
 */
inline RunOutput run_experiment(const Environment& env, const std::vector<ExpertSpec>& experts,
                                const RunSpec& spec) {
    if (experts.empty())
        throw std::invalid_argument("at least one expert is required");
    if (spec.method == Method::Mlci &&
        (spec.mlci_expert < 0 || static_cast<std::size_t>(spec.mlci_expert) >= experts.size()))
        throw std::invalid_argument("mlci expert index out of range");

    RunOutput out;
    out.demos = generate_demos(env, experts, spec.seed);
    if (out.demos.empty())
        throw std::invalid_argument("experts contributed no demonstrations");

    InferenceConfig cfg = spec.inference;
    cfg.seed = spec.seed;
    const int k_eff = spec.method == Method::Moci ? spec.k : 1;

    std::string method_label = method_name(spec.method);
    if (spec.method == Method::Mlci)
        method_label += ":" + experts[static_cast<std::size_t>(spec.mlci_expert)].name;

    auto [result, seconds] = timed([&]() -> MociResult {
        switch (spec.method) {
        case Method::Moci:
            return run_moci(env, out.demos, cfg, spec.k);
        case Method::SinglePref:
            return run_single_pref(env, out.demos, cfg);
        case Method::Mlci: {
            MociResult r;
            r.model.weights = {experts[static_cast<std::size_t>(spec.mlci_expert)].weights};
            r.model.priors = {1.0};
            r.model.constraints = run_mlci(
                env, out.demos, experts[static_cast<std::size_t>(spec.mlci_expert)].weights,
                cfg);
            return r;
        }
        }
        throw std::logic_error("unreachable method");
    });
    out.model = std::move(result.model);
    out.trace = std::move(result.trace);

    std::vector<PreferenceWeights> truth;
    if (spec.method != Method::Mlci && static_cast<std::size_t>(k_eff) == experts.size())
        for (const auto& e : experts)
            truth.push_back(e.weights);
    Evaluation eval = evaluate_run(env, out.demos, out.model, method_label, cfg, seconds,
                                   truth.empty() ? nullptr : &truth);
    out.report = std::move(eval.report);
    out.row = std::move(eval.row);
    return out;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepAxes {
    std::vector<int> grid_sizes = {5};
    std::vector<HorizonRule> horizon_rules = {HorizonRule::Short};
    std::vector<int> demo_counts = {20};
    std::vector<double> thresholds = {0.05};
    std::vector<int> cluster_counts = {2};
    std::vector<Method> methods = {Method::Moci};
    std::vector<std::uint64_t> seeds = {1};

    void validate() const {
        if (grid_sizes.empty() || horizon_rules.empty() || demo_counts.empty() ||
            thresholds.empty() || cluster_counts.empty() || methods.empty() || seeds.empty())
            throw std::invalid_argument("every sweep axis needs at least one value");
    }
};

inline std::vector<std::uint64_t> seed_range(int count, std::uint64_t base = 1) {
    if (count < 1)
        throw std::invalid_argument("seed count must be positive");
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        seeds[static_cast<std::size_t>(i)] = base + static_cast<std::uint64_t>(i);
    return seeds;
}

struct ExperimentSpec {
    std::vector<ExpertSpec> experts = protocol_experts(); // counts set per cell
    InferenceConfig inference;                            // base; d_dkl and seed vary per cell
    SweepAxes axes;
    std::optional<std::string> env_path; // fixed environment file instead of scaled layouts
    std::string out_dir = "out";
};

struct SweepCell {
    Method method = Method::Moci;
    int mlci_expert = 0;
    int n = 5;
    HorizonRule rule = HorizonRule::Short;
    bool env_from_file = false;
    int demo_count = 20;
    double d_dkl = 0.05;
    int k = 2;
    std::uint64_t seed = 1;

    // Filename-safe unique key; doubles as the resumability identity.
    std::string key() const {
        char threshold[32];
        std::snprintf(threshold, sizeof(threshold), "%.12g", d_dkl);
        std::string out = method_name(method);
        if (method == Method::Mlci)
            out += std::to_string(mlci_expert);
        out += "_n" + std::to_string(n);
        out += "_h" + (env_from_file ? std::string("file") : horizon_rule_name(rule));
        out += "_d" + std::to_string(demo_count);
        out += "_t" + std::string(threshold);
        out += "_k" + std::to_string(k);
        out += "_s" + std::to_string(seed);
        return out;
    }
};

inline std::vector<SweepCell> enumerate_cells(const ExperimentSpec& spec,
                                              const std::optional<Environment>& fixed_env) {
    spec.axes.validate();
    if (spec.experts.empty())
        throw std::invalid_argument("at least one expert is required");

    std::vector<SweepCell> cells;
    const std::vector<int> sizes =
        fixed_env ? std::vector<int>{fixed_env->n} : spec.axes.grid_sizes;
    const std::vector<HorizonRule> rules =
        fixed_env ? std::vector<HorizonRule>{HorizonRule::Short} : spec.axes.horizon_rules;

    for (Method method : spec.axes.methods) {
        const int mlci_variants =
            method == Method::Mlci ? static_cast<int>(spec.experts.size()) : 1;
        const std::vector<int> ks =
            method == Method::Moci ? spec.axes.cluster_counts : std::vector<int>{1};
        for (int variant = 0; variant < mlci_variants; ++variant)
            for (HorizonRule rule : rules)
                for (int n : sizes)
                    for (int demo_count : spec.axes.demo_counts)
                        for (double d_dkl : spec.axes.thresholds)
                            for (int k : ks)
                                for (std::uint64_t seed : spec.axes.seeds) {
                                    SweepCell cell;
                                    cell.method = method;
                                    cell.mlci_expert = variant;
                                    cell.n = n;
                                    cell.rule = rule;
                                    cell.env_from_file = fixed_env.has_value();
                                    cell.demo_count = demo_count;
                                    cell.d_dkl = d_dkl;
                                    cell.k = k;
                                    cell.seed = seed;
                                    cells.push_back(cell);
                                }
    }
    return cells;
}

struct CellOutcome {
    SweepCell cell;
    bool ok = false;
    bool loaded = false; // satisfied from a previously persisted cell file
    ReportRow row;
    std::string error;
};

struct SweepResult {
    std::vector<CellOutcome> outcomes; // enumeration order
    int computed = 0;
    int loaded = 0;
    int failed = 0;
};

namespace detail {

inline ReportRow run_cell(const ExperimentSpec& spec, const SweepCell& cell,
                          const std::optional<Environment>& fixed_env) {
    const Environment env =
        fixed_env ? *fixed_env : protocol_environment(cell.n, cell.rule);
    RunSpec run;
    run.method = cell.method;
    run.k = cell.k;
    run.inference = spec.inference;
    run.inference.d_dkl = cell.d_dkl;
    run.seed = cell.seed;
    run.mlci_expert = cell.mlci_expert;
    const auto experts = with_demo_total(spec.experts, cell.demo_count);
    return run_experiment(env, experts, run).row;
}

} // namespace detail

/**
 * Executes the Cartesian product of the sweep axes, one seeded independent
 * run per cell, on up to `jobs` worker threads. Completed cells are
 * persisted under <out_dir>/cells/ and skipped on rerun, so an interrupted
 * sweep resumes where it stopped. A failing cell records its error and the
 * sweep continues.
 */
inline SweepResult run_sweep(const ExperimentSpec& spec, int jobs = 1) {
    std::optional<Environment> fixed_env;
    if (spec.env_path)
        fixed_env = load_env(*spec.env_path);
    const std::vector<SweepCell> cells = enumerate_cells(spec, fixed_env);

    namespace fs = std::filesystem;
    const fs::path cell_dir = fs::path(spec.out_dir) / "cells";
    fs::create_directories(cell_dir);

    SweepResult result;
    result.outcomes.resize(cells.size());

    std::atomic<std::size_t> next{0};
    std::atomic<int> computed{0};
    std::atomic<int> loaded{0};
    std::atomic<int> failed{0};

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size())
                return;
            CellOutcome& outcome = result.outcomes[i];
            outcome.cell = cells[i];
            const std::string key = cells[i].key();
            const fs::path row_path = cell_dir / (key + ".csv");
            const fs::path err_path = cell_dir / (key + ".err");
            try {
                if (fs::exists(row_path)) {
                    const auto rows = read_report_csv(row_path.string());
                    if (rows.size() != 1)
                        throw std::runtime_error("cell file " + row_path.string() +
                                                 " does not hold exactly one row");
                    outcome.row = rows.front();
                    outcome.ok = true;
                    outcome.loaded = true;
                    loaded.fetch_add(1);
                } else if (fs::exists(err_path)) {
                    std::ifstream in(err_path);
                    std::stringstream buffer;
                    buffer << in.rdbuf();
                    outcome.error = buffer.str();
                    outcome.loaded = true;
                    failed.fetch_add(1);
                } else {
                    outcome.row = detail::run_cell(spec, cells[i], fixed_env);
                    write_report_csv(row_path.string(), {outcome.row}, {"cell " + key});
                    outcome.ok = true;
                    computed.fetch_add(1);
                }
            } catch (const std::exception& e) {
                outcome.ok = false;
                outcome.error = e.what();
                failed.fetch_add(1);
                try {
                    detail::atomic_write_text(err_path.string(), std::string(e.what()) + "\n");
                } catch (...) {
                    // the error is already recorded in the outcome
                }
            }
        }
    };

    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }

    result.computed = computed.load();
    result.loaded = loaded.load();
    result.failed = failed.load();
    return result;
}

// ---------------------------------------------------------------------------
// Aggregation and rendering
// ---------------------------------------------------------------------------

struct Stats {
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation, 0 for fewer than 2 runs
    int count = 0;
};

inline Stats mean_std(const std::vector<double>& xs) {
    Stats s;
    s.count = static_cast<int>(xs.size());
    if (xs.empty())
        return s;
    double sum = 0.0;
    for (double x : xs)
        sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double sq = 0.0;
        for (double x : xs) {
            const double d = x - s.mean;
            sq += d * d;
        }
        s.stddev = std::sqrt(sq / static_cast<double>(xs.size() - 1));
    }
    return s;
}

namespace detail {

inline std::vector<ReportRow> ok_rows(const SweepResult& sweep) {
    std::vector<ReportRow> rows;
    for (const auto& outcome : sweep.outcomes)
        if (outcome.ok)
            rows.push_back(outcome.row);
    return rows;
}

// 2N / 5N label recovered from the stored horizon, for grouping.
inline std::string horizon_label(const ReportRow& row) {
    if (row.horizon == 2 * row.n)
        return "2N";
    if (row.horizon == 5 * row.n)
        return "5N";
    return "H" + std::to_string(row.horizon);
}

} // namespace detail

// The flat per-run table, rows in cell-enumeration order.
inline void write_results_table(const std::string& path, const SweepResult& sweep) {
    write_report_csv(path, detail::ok_rows(sweep));
}

inline void write_failures(const std::string& path, const SweepResult& sweep) {
    std::string out;
    for (const auto& outcome : sweep.outcomes)
        if (!outcome.ok && !outcome.error.empty())
            out += outcome.cell.key() + ": " + outcome.error + "\n";
    if (!out.empty())
        detail::atomic_write_text(path, out);
}

// False-positive rate against dataset size, one series per threshold.
inline void write_fpr_by_demos(const std::string& path, const SweepResult& sweep) {
    std::map<std::pair<double, int>, std::vector<double>> groups;
    for (const auto& row : detail::ok_rows(sweep))
        groups[{row.d_dkl, row.demo_count}].push_back(row.fpr);
    std::string out = "# grouped by threshold and pooled demonstration count\n";
    out += "d_dkl,demo_count,runs,fpr_mean,fpr_std\n";
    for (const auto& [key, fprs] : groups) {
        const Stats s = mean_std(fprs);
        out += detail::format_double(key.first) + "," + std::to_string(key.second) + "," +
               std::to_string(s.count) + "," + detail::format_double(s.mean) + "," +
               detail::format_double(s.stddev) + "\n";
    }
    detail::atomic_write_text(path, out);
}

// False-positive rate against grid size at fixed dataset size.
inline void write_fpr_by_gridsize(const std::string& path, const SweepResult& sweep) {
    std::map<std::pair<int, int>, std::vector<double>> groups; // (n, demo_count)
    for (const auto& row : detail::ok_rows(sweep))
        groups[{row.n, row.demo_count}].push_back(row.fpr);
    std::string out = "# grouped by grid size and pooled demonstration count\n";
    out += "n,demo_count,runs,fpr_mean,fpr_std\n";
    for (const auto& [key, fprs] : groups) {
        const Stats s = mean_std(fprs);
        out += std::to_string(key.first) + "," + std::to_string(key.second) + "," +
               std::to_string(s.count) + "," + detail::format_double(s.mean) + "," +
               detail::format_double(s.stddev) + "\n";
    }
    detail::atomic_write_text(path, out);
}

// Inference wall time against grid size, one series per horizon rule.
inline void write_runtime_by_gridsize(const std::string& path, const SweepResult& sweep) {
    std::map<std::pair<std::string, int>, std::vector<double>> groups; // (rule, n)
    for (const auto& row : detail::ok_rows(sweep))
        groups[{detail::horizon_label(row), row.n}].push_back(row.runtime_s);
    std::string out = "# grouped by horizon rule and grid size\n";
    out += "horizon_rule,n,runs,runtime_mean_s,runtime_std_s\n";
    for (const auto& [key, times] : groups) {
        const Stats s = mean_std(times);
        out += key.first + "," + std::to_string(key.second) + "," + std::to_string(s.count) +
               "," + detail::format_double(s.mean) + "," + detail::format_double(s.stddev) +
               "\n";
    }
    detail::atomic_write_text(path, out);
}

// Cluster-count ablation: the six headline metrics per K.
inline void write_ablation_table(const std::string& path, const SweepResult& sweep) {
    std::map<int, std::vector<ReportRow>> groups;
    for (const auto& row : detail::ok_rows(sweep))
        groups[row.k].push_back(row);
    std::string out = "# cluster-count ablation, aggregated over seeds\n";
    out += "k,runs,avg_ll_mean,avg_ll_std,cmse_mean,cmse_std,precision_mean,precision_std,"
           "recall_mean,recall_std,f1_mean,f1_std,fpr_mean,fpr_std\n";
    for (const auto& [k, rows] : groups) {
        auto collect = [&](auto field) {
            std::vector<double> xs;
            xs.reserve(rows.size());
            for (const auto& r : rows)
                xs.push_back(field(r));
            return mean_std(xs);
        };
        const Stats ll = collect([](const ReportRow& r) { return r.avg_ll; });
        const Stats cm = collect([](const ReportRow& r) { return r.cmse; });
        const Stats pr = collect([](const ReportRow& r) { return r.precision; });
        const Stats rc = collect([](const ReportRow& r) { return r.recall; });
        const Stats f1 = collect([](const ReportRow& r) { return r.f1; });
        const Stats fp = collect([](const ReportRow& r) { return r.fpr; });
        out += std::to_string(k) + "," + std::to_string(ll.count);
        for (const Stats& s : {ll, cm, pr, rc, f1, fp})
            out += "," + detail::format_double(s.mean) + "," + detail::format_double(s.stddev);
        out += "\n";
    }
    detail::atomic_write_text(path, out);
}

// Everything the sweep emits besides the per-cell files.
inline void write_sweep_outputs(const ExperimentSpec& spec, const SweepResult& sweep) {
    namespace fs = std::filesystem;
    const fs::path dir(spec.out_dir);
    fs::create_directories(dir);
    write_results_table((dir / "results.csv").string(), sweep);
    write_failures((dir / "failures.txt").string(), sweep);
    write_fpr_by_demos((dir / "fpr_by_demos.csv").string(), sweep);
    write_fpr_by_gridsize((dir / "fpr_by_gridsize.csv").string(), sweep);
    write_runtime_by_gridsize((dir / "runtime_by_gridsize.csv").string(), sweep);
    write_ablation_table((dir / "ablation.csv").string(), sweep);
}

/**
 * Side-by-side method comparison over all runs in a results table. The icrl
 * row is a static quoted reference from the original method's external
 * evaluation — it is clearly marked and never computed here, since that
 * method is a neural-network approach outside this library's exact-inference
 * scope.
 */
inline std::string render_comparison(const std::vector<ReportRow>& rows) {
    if (rows.empty())
        throw std::invalid_argument("no completed runs to compare");

    std::map<std::string, std::vector<const ReportRow*>> groups;
    for (const auto& row : rows)
        groups[row.method].push_back(&row);

    auto capability = [](const std::string& method) -> std::pair<std::string, std::string> {
        if (method.rfind("mlci", 0) == 0)
            return {"single", "fixed (known reward)"};
        if (method.rfind("single", 0) == 0)
            return {"pooled (one cluster)", "learned"};
        return {"heterogeneous", "learned per cluster"};
    };

    std::string out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-22s %10s %12s %6s  %-22s %-22s\n", "method",
                  "cmse_mean", "runtime_s", "runs", "trajectory_types", "preference_weights");
    out += line;
    for (const auto& [method, group] : groups) {
        std::vector<double> cmses, times;
        for (const ReportRow* r : group) {
            cmses.push_back(r->cmse);
            times.push_back(r->runtime_s);
        }
        const Stats c = mean_std(cmses);
        const Stats t = mean_std(times);
        const auto [traj, pref] = capability(method);
        std::snprintf(line, sizeof(line), "%-22s %10.4f %12.4f %6d  %-22s %-22s\n",
                      method.c_str(), c.mean, t.mean, c.count, traj.c_str(), pref.c_str());
        out += line;
    }
    std::snprintf(line, sizeof(line), "%-22s %10.4f %12.4f %6s  %-22s %-22s\n",
                  "icrl (quoted)", 0.36, 8.90, "-", "single", "no");
    out += line;
    out += "note: the icrl row quotes reference results reported for that method elsewhere;\n"
           "      it is not implemented or measured by this tool.\n";
    return out;
}

} // namespace moci
