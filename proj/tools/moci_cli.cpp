// Command-line experiment harness: environment and demonstration generation,
// inference runs, axis sweeps, and comparison reports.

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moci.hpp"

namespace fs = std::filesystem;

namespace {

std::string default_out_dir() {
    const char* env = std::getenv("MOCI_OUT_DIR");
    return env != nullptr && *env != '\0' ? env : "out";
}

std::vector<double> parse_weight_list(const std::string& text, const std::string& what) {
    std::vector<double> weights;
    std::size_t begin = 0;
    while (begin <= text.size()) {
        const std::size_t end = std::min(text.find(',', begin), text.size());
        const std::string token = text.substr(begin, end - begin);
        try {
            std::size_t used = 0;
            weights.push_back(std::stod(token, &used));
            if (used != token.size())
                throw std::invalid_argument(token);
        } catch (const std::exception&) {
            throw CLI::ValidationError(what, "'" + token + "' is not a number");
        }
        begin = end + 1;
    }
    return weights;
}

// name:w0,w1,w2,w3:count
moci::ExpertSpec parse_expert(const std::string& text) {
    const std::size_t first = text.find(':');
    const std::size_t last = text.rfind(':');
    if (first == std::string::npos || last == first)
        throw CLI::ValidationError("--expert", "expected name:w0,w1,...:count, got '" + text +
                                                   "'");
    moci::ExpertSpec spec;
    spec.name = text.substr(0, first);
    if (spec.name.empty())
        throw CLI::ValidationError("--expert", "expert name is empty");
    spec.weights = parse_weight_list(text.substr(first + 1, last - first - 1), "--expert");
    const std::string count = text.substr(last + 1);
    try {
        std::size_t used = 0;
        spec.count = std::stoi(count, &used);
        if (used != count.size() || spec.count < 0)
            throw std::invalid_argument(count);
    } catch (const std::exception&) {
        throw CLI::ValidationError("--expert", "'" + count + "' is not a valid demo count");
    }
    return spec;
}

std::string joined_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint constraint and preference-weight inference from unlabeled "
                 "gridworld demonstrations"};
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    std::string out_dir = default_out_dir();
    std::string config_path;
    int jobs = 1;
    app.add_option("--seed", seed, "base seed for all randomized steps")
        ->capture_default_str();
    app.add_option("--out", out_dir,
                   "output directory (default: MOCI_OUT_DIR or ./out)");
    app.add_option("--config", config_path, "inference settings file (moci-config format)");
    app.add_option("--jobs", jobs, "worker threads for sweeps")->capture_default_str();

    // ---- gen-env ----------------------------------------------------------
    auto* gen_env = app.add_subcommand("gen-env", "write an environment file");
    gen_env->fallthrough();
    std::string preset;
    int n = 0;
    std::string layout = "random";
    std::string rule_name = "2N";
    double water_density = 0.15;
    bool step_feature = false;
    std::string env_out_file;
    gen_env->add_option("--preset", preset, "named layout: protocol-6x6 or protocol-5x5");
    gen_env->add_option("--n", n, "grid side length for generated layouts");
    gen_env->add_option("--layout", layout, "generated layout kind (with --n)")
        ->check(CLI::IsMember({"protocol", "random"}))
        ->capture_default_str();
    gen_env->add_option("--horizon-rule", rule_name, "horizon preset: 2N or 5N")
        ->check(CLI::IsMember({"2N", "5N"}))
        ->capture_default_str();
    gen_env->add_option("--water-density", water_density,
                        "Water probability per cell for random layouts")
        ->capture_default_str();
    gen_env->add_flag("--step-feature", step_feature,
                      "append a constant per-step feature to every state");
    gen_env->add_option("--env-file", env_out_file, "output path (default <out>/env.txt)");

    // ---- gen-demos --------------------------------------------------------
    auto* gen_demos = app.add_subcommand("gen-demos", "sample expert demonstrations");
    gen_demos->fallthrough();
    std::string demos_env_path;
    int demo_total = 20;
    std::vector<std::string> expert_texts;
    std::string demos_out_file;
    std::string labels_out_file;
    gen_demos->add_option("--env", demos_env_path, "environment file")->required();
    gen_demos->add_option("--total", demo_total, "pooled demo count, split across experts")
        ->capture_default_str();
    gen_demos->add_option("--expert", expert_texts,
                          "expert override as name:w0,w1,w2,w3:count (repeatable)");
    gen_demos->add_option("--demos-file", demos_out_file,
                          "output path (default <out>/demos.txt)");
    gen_demos->add_option("--labels-file", labels_out_file,
                          "sidecar path (default <out>/labels.txt)");

    // ---- infer ------------------------------------------------------------
    auto* infer = app.add_subcommand("infer", "fit a model to a demonstration file");
    infer->fallthrough();
    std::string infer_env_path;
    std::string infer_demos_path;
    std::string method_name_arg = "moci";
    int k_arg = 2;
    double d_dkl_arg = 0.05;
    double alpha_arg = 0.1;
    int i_irl_arg = 50;
    int i_iter_arg = 10;
    double em_tol_arg = 1e-4;
    int m_test_arg = 0;
    double init_scale_arg = 0.1;
    bool unnormalized_gain = false;
    int mlci_expert = 0;
    std::string w_known_text;
    std::vector<std::string> infer_expert_texts;
    infer->add_option("--env", infer_env_path, "environment file")->required();
    infer->add_option("--demos", infer_demos_path, "demonstration file")->required();
    infer->add_option("--method", method_name_arg, "moci, mlci or single")
        ->check(CLI::IsMember({"moci", "mlci", "single"}))
        ->capture_default_str();
    infer->add_option("--k", k_arg, "cluster count (moci only)")->capture_default_str();
    infer->add_option("--d-dkl", d_dkl_arg, "constraint-acceptance gain threshold");
    infer->add_option("--alpha", alpha_arg, "gradient-ascent learning rate");
    infer->add_option("--i-irl", i_irl_arg, "gradient steps per weight update");
    infer->add_option("--i-iter", i_iter_arg, "max EM iterations");
    infer->add_option("--em-tol", em_tol_arg, "EM convergence tolerance");
    infer->add_option("--m-test", m_test_arg, "cap on candidates scored per addition");
    infer->add_option("--init-scale", init_scale_arg, "weight-initialization spread");
    infer->add_flag("--unnormalized-gain", unnormalized_gain,
                    "compare the joint (not per-demo) gain against the threshold");
    infer->add_option("--mlci-expert", mlci_expert,
                      "which expert's weights the mlci baseline receives")
        ->capture_default_str();
    infer->add_option("--w-known", w_known_text,
                      "explicit known weights for mlci, as w0,w1,w2,w3");
    infer->add_option("--expert", infer_expert_texts,
                      "ground-truth expert as name:w0,w1,...:count (repeatable)");

    // ---- sweep ------------------------------------------------------------
    auto* sweep = app.add_subcommand("sweep", "run the Cartesian product of axis values");
    sweep->fallthrough();
    std::vector<int> sweep_sizes{5};
    std::vector<std::string> sweep_rules{"2N"};
    std::vector<int> sweep_demo_counts{20};
    std::vector<double> sweep_thresholds{0.05};
    std::vector<int> sweep_ks{2};
    std::vector<std::string> sweep_methods{"moci"};
    std::vector<std::uint64_t> sweep_seeds;
    int seed_count = 20;
    std::string sweep_env_path;
    std::vector<std::string> sweep_expert_texts;
    sweep->add_option("--sizes", sweep_sizes, "grid side lengths")->delimiter(',');
    sweep->add_option("--rules", sweep_rules, "horizon rules (2N,5N)")->delimiter(',');
    sweep->add_option("--demo-counts", sweep_demo_counts, "pooled demo counts")
        ->delimiter(',');
    sweep->add_option("--thresholds", sweep_thresholds, "d_dkl values")->delimiter(',');
    sweep->add_option("--ks", sweep_ks, "cluster counts (moci only)")->delimiter(',');
    sweep->add_option("--methods", sweep_methods, "methods: moci,mlci,single")
        ->delimiter(',');
    sweep->add_option("--seeds", sweep_seeds, "explicit seed list")->delimiter(',');
    sweep->add_option("--seed-count", seed_count,
                      "number of consecutive seeds starting at --seed")
        ->capture_default_str();
    sweep->add_option("--env", sweep_env_path, "fixed environment file (disables size axes)");
    sweep->add_option("--expert", sweep_expert_texts,
                      "expert override as name:w0,w1,...:count (repeatable)");
    // per-run inference settings shared with infer
    sweep->add_option("--alpha", alpha_arg, "gradient-ascent learning rate");
    sweep->add_option("--i-irl", i_irl_arg, "gradient steps per weight update");
    sweep->add_option("--i-iter", i_iter_arg, "max EM iterations");
    sweep->add_option("--em-tol", em_tol_arg, "EM convergence tolerance");
    sweep->add_option("--m-test", m_test_arg, "cap on candidates scored per addition");
    sweep->add_option("--init-scale", init_scale_arg, "weight-initialization spread");
    sweep->add_flag("--unnormalized-gain", unnormalized_gain,
                    "compare the joint (not per-demo) gain against the threshold");

    // ---- report -----------------------------------------------------------
    auto* report = app.add_subcommand("report", "render a method comparison table");
    report->fallthrough();
    std::string results_dir;
    report->add_option("--results", results_dir,
                       "results directory (default: the --out directory)");

    CLI11_PARSE(app, argc, argv);

    try {
        // Settings resolution: library defaults, then the config file, then
        // explicit command-line flags.
        moci::InferenceConfig cfg;
        int k = 2;
        if (!config_path.empty()) {
            const moci::InferenceSettings loaded = moci::load_config(config_path);
            cfg = loaded.config;
            k = loaded.k;
        }
        auto apply_overrides = [&](CLI::App* sub) {
            // Not every settings flag exists on every subcommand (sweeps take
            // --thresholds instead of --d-dkl), so probe before counting.
            auto given = [&](const char* name) {
                const CLI::Option* opt = sub->get_option_no_throw(name);
                return opt != nullptr && opt->count() > 0;
            };
            if (given("--d-dkl"))
                cfg.d_dkl = d_dkl_arg;
            if (given("--alpha"))
                cfg.alpha = alpha_arg;
            if (given("--i-irl"))
                cfg.i_irl = i_irl_arg;
            if (given("--i-iter"))
                cfg.i_iter = i_iter_arg;
            if (given("--em-tol"))
                cfg.em_tol = em_tol_arg;
            if (given("--m-test"))
                cfg.m_test = m_test_arg;
            if (given("--init-scale"))
                cfg.init_scale = init_scale_arg;
            if (given("--unnormalized-gain"))
                cfg.normalized_gain = false;
            if (app.count("--seed") || cfg.seed == 0)
                cfg.seed = seed;
        };

        if (*gen_env) {
            moci::Environment env = [&] {
                if (!preset.empty())
                    return moci::preset_environment(preset);
                if (n > 0) {
                    const auto rule = moci::horizon_rule_from_name(rule_name);
                    if (layout == "protocol")
                        return moci::protocol_environment(n, rule, step_feature);
                    return moci::random_environment(n, water_density, seed, rule,
                                                    step_feature);
                }
                throw std::invalid_argument("gen-env needs --preset or --n");
            }();
            fs::create_directories(out_dir);
            const std::string path =
                env_out_file.empty() ? joined_path(out_dir, "env.txt") : env_out_file;
            moci::save_env(path, env);
            std::cout << "wrote " << path << " (n=" << env.n << ", horizon=" << env.horizon
                      << ", constraints=" << env.true_constraints.size() << ")\n";
        } else if (*gen_demos) {
            const moci::Environment env = moci::load_env(demos_env_path);
            std::vector<moci::ExpertSpec> experts;
            if (expert_texts.empty()) {
                experts = moci::with_demo_total(moci::protocol_experts(), demo_total);
            } else {
                for (const auto& text : expert_texts)
                    experts.push_back(parse_expert(text));
                if (gen_demos->count("--total"))
                    experts = moci::with_demo_total(experts, demo_total);
            }
            const auto demos = moci::generate_demos(env, experts, seed);
            moci::DemoLabels labels;
            for (const auto& e : experts)
                labels.expert_names.push_back(e.name);
            for (const auto& traj : demos)
                labels.labels.push_back(traj.label.value());
            fs::create_directories(out_dir);
            const std::string demo_path =
                demos_out_file.empty() ? joined_path(out_dir, "demos.txt") : demos_out_file;
            const std::string label_path =
                labels_out_file.empty() ? joined_path(out_dir, "labels.txt") : labels_out_file;
            moci::save_demos(demo_path, env, demos);
            moci::save_labels(label_path, labels);
            std::cout << "wrote " << demo_path << " (" << demos.size()
                      << " demonstrations) and " << label_path << "\n";
        } else if (*infer) {
            apply_overrides(infer);
            if (infer->count("--k"))
                k = k_arg;
            const moci::Method method = moci::method_from_name(method_name_arg);
            if (method != moci::Method::Mlci && infer->count("--w-known"))
                throw CLI::ValidationError("--w-known", "only the mlci method takes known "
                                                        "weights");
            if (method != moci::Method::Moci && infer->count("--k") && k != 1)
                throw CLI::ValidationError("--k", "mlci and single always use one cluster");

            const moci::Environment env = moci::load_env(infer_env_path);
            const auto demos = moci::load_demos(infer_demos_path, env);
            if (demos.empty())
                throw std::invalid_argument("demonstration file is empty");

            std::vector<moci::ExpertSpec> experts;
            if (infer_expert_texts.empty())
                experts = moci::protocol_experts();
            else
                for (const auto& text : infer_expert_texts)
                    experts.push_back(parse_expert(text));

            std::string method_label = moci::method_name(method);
            auto [result, seconds] = moci::timed([&]() -> moci::MociResult {
                switch (method) {
                case moci::Method::Moci:
                    return moci::run_moci(env, demos, cfg, k);
                case moci::Method::SinglePref:
                    return moci::run_single_pref(env, demos, cfg);
                case moci::Method::Mlci: {
                    moci::PreferenceWeights w_known;
                    if (infer->count("--w-known")) {
                        w_known = parse_weight_list(w_known_text, "--w-known");
                    } else {
                        if (mlci_expert < 0 ||
                            static_cast<std::size_t>(mlci_expert) >= experts.size())
                            throw std::invalid_argument("mlci expert index out of range");
                        w_known = experts[static_cast<std::size_t>(mlci_expert)].weights;
                        method_label +=
                            ":" + experts[static_cast<std::size_t>(mlci_expert)].name;
                    }
                    moci::MociResult r;
                    r.model.weights = {w_known};
                    r.model.priors = {1.0};
                    r.model.constraints = moci::run_mlci(env, demos, w_known, cfg);
                    return r;
                }
                }
                throw std::logic_error("unreachable method");
            });

            std::vector<moci::PreferenceWeights> truth;
            if (method != moci::Method::Mlci && experts.size() == result.model.weights.size())
                for (const auto& e : experts)
                    truth.push_back(e.weights);
            const moci::Evaluation eval =
                moci::evaluate_run(env, demos, result.model, method_label, cfg, seconds,
                                   truth.empty() ? nullptr : &truth);

            fs::create_directories(out_dir);
            moci::save_model(joined_path(out_dir, "model.txt"), result.model);
            moci::save_trace(joined_path(out_dir, "trace.txt"), result.trace);
            moci::write_report_csv(joined_path(out_dir, "report.csv"), {eval.row});
            std::cout << "method " << method_label << ": " << result.model.constraints.size()
                      << " constraints, cmse " << eval.row.cmse << ", recall "
                      << eval.row.recall << ", fpr " << eval.row.fpr << ", avg_ll "
                      << eval.row.avg_ll << ", " << seconds << " s\n"
                      << "wrote " << joined_path(out_dir, "model.txt") << ", "
                      << joined_path(out_dir, "trace.txt") << ", "
                      << joined_path(out_dir, "report.csv") << "\n";
        } else if (*sweep) {
            apply_overrides(sweep);
            moci::ExperimentSpec spec;
            spec.inference = cfg;
            spec.out_dir = out_dir;
            if (!sweep_env_path.empty())
                spec.env_path = sweep_env_path;
            if (!sweep_expert_texts.empty()) {
                spec.experts.clear();
                for (const auto& text : sweep_expert_texts)
                    spec.experts.push_back(parse_expert(text));
            }
            spec.axes.grid_sizes = sweep_sizes;
            spec.axes.horizon_rules.clear();
            for (const auto& name : sweep_rules)
                spec.axes.horizon_rules.push_back(moci::horizon_rule_from_name(name));
            spec.axes.demo_counts = sweep_demo_counts;
            spec.axes.thresholds = sweep_thresholds;
            spec.axes.cluster_counts = sweep_ks;
            spec.axes.methods.clear();
            for (const auto& name : sweep_methods)
                spec.axes.methods.push_back(moci::method_from_name(name));
            spec.axes.seeds =
                sweep_seeds.empty() ? moci::seed_range(seed_count, seed) : sweep_seeds;

            const moci::SweepResult result = moci::run_sweep(spec, jobs);
            moci::write_sweep_outputs(spec, result);
            std::cout << "sweep: " << result.outcomes.size() << " cells (" << result.computed
                      << " computed, " << result.loaded << " reused, " << result.failed
                      << " failed)\n"
                      << "wrote " << joined_path(out_dir, "results.csv")
                      << " and figure data files\n";
            if (result.failed > 0) {
                std::cout << "failures recorded in " << joined_path(out_dir, "failures.txt")
                          << "\n";
                if (result.failed == static_cast<int>(result.outcomes.size()))
                    return 1;
            }
        } else if (*report) {
            const std::string dir = results_dir.empty() ? out_dir : results_dir;
            const auto rows = moci::read_report_csv(joined_path(dir, "results.csv"));
            std::cout << moci::render_comparison(rows);
        }
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
