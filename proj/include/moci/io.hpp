#pragma once

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "moci/environment.hpp"
#include "moci/inference.hpp"
#include "moci/metrics.hpp"

namespace moci {

// Error for malformed files, carrying path and line context in the message.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& path, int line, const std::string& message)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + message),
          line_(line) {}

    int line() const { return line_; }

private:
    int line_;
};

namespace detail {

// Shortest decimal form that round-trips a double exactly.
inline std::string format_double(double v) {
    if (std::isnan(v))
        return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::from_chars(buf, buf + std::char_traits<char>::length(buf), back);
    if (back == v)
        return buf;
    // %.17g is always sufficient; this is pure belt-and-braces.
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

inline double parse_double(const std::string& path, int line, const std::string& token) {
    double v = 0.0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw ParseError(path, line, "expected a number, got '" + token + "'");
    return v;
}

inline long long parse_int(const std::string& path, int line, const std::string& token) {
    long long v = 0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw ParseError(path, line, "expected an integer, got '" + token + "'");
    return v;
}

inline std::uint64_t parse_u64(const std::string& path, int line, const std::string& token) {
    std::uint64_t v = 0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw ParseError(path, line, "expected an unsigned integer, got '" + token + "'");
    return v;
}

inline bool parse_bool(const std::string& path, int line, const std::string& token) {
    if (token == "0")
        return false;
    if (token == "1")
        return true;
    throw ParseError(path, line, "expected 0 or 1, got '" + token + "'");
}

struct Line {
    int number = 0;
    std::vector<std::string> tokens; // tokens[0] is the key
};

// Whole-file tokenizer: blank lines and '#' comment lines are dropped.
inline std::vector<Line> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::vector<Line> lines;
    std::string raw;
    int number = 0;
    while (std::getline(in, raw)) {
        ++number;
        Line line;
        line.number = number;
        std::istringstream iss(raw);
        std::string token;
        while (iss >> token)
            line.tokens.push_back(token);
        if (line.tokens.empty() || line.tokens.front().front() == '#')
            continue;
        lines.push_back(std::move(line));
    }
    return lines;
}

inline void expect_format(const std::string& path, const std::vector<Line>& lines,
                          const std::string& name) {
    if (lines.empty())
        throw ParseError(path, 0, "empty file, expected 'format " + name + " 1' header");
    const Line& head = lines.front();
    if (head.tokens.size() != 3 || head.tokens[0] != "format" || head.tokens[1] != name ||
        head.tokens[2] != "1")
        throw ParseError(path, head.number, "expected 'format " + name + " 1' header");
}

// Writes via a temp file plus rename so concurrent readers and interrupted
// runs never observe a half-written file.
inline void atomic_write_text(const std::string& path, const std::string& content) {
    static std::atomic<std::uint64_t> counter{0};
    const std::string tmp =
        path + ".tmp" + std::to_string(counter.fetch_add(1, std::memory_order_relaxed));
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot write " + tmp);
        out << content;
        out.flush();
        if (!out)
            throw std::runtime_error("short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw std::runtime_error("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

inline std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Environment files (format moci-env 1)
// ---------------------------------------------------------------------------

inline std::string env_to_text(const Environment& env) {
    env.validate();
    std::string out = "format moci-env 1\n";
    out += "n " + std::to_string(env.n) + "\n";
    out += "horizon " + std::to_string(env.horizon) + "\n";
    out += "gamma " + detail::format_double(env.gamma) + "\n";
    out += "start " + std::to_string(env.start) + "\n";
    out += "goal " + std::to_string(env.goal) + "\n";
    out += "step_feature " + std::string(env.step_feature ? "1" : "0") + "\n";
    for (int r = 0; r < env.n; ++r) {
        std::string row = "terrain ";
        for (int c = 0; c < env.n; ++c)
            row += terrain_code(env.terrain[static_cast<std::size_t>(env.index(r, c))]);
        out += row + "\n";
    }
    // Feature vectors are implied by terrain; rows are written only where
    // they deviate from the one-hot default.
    for (int s = 0; s < env.num_states(); ++s) {
        const auto def = env.default_features(env.terrain[static_cast<std::size_t>(s)]);
        if (env.phi(s) == def)
            continue;
        const Cell cell = env.cell(s);
        std::string line =
            "feature " + std::to_string(cell.row) + " " + std::to_string(cell.col);
        for (double v : env.phi(s))
            line += " " + detail::format_double(v);
        out += line + "\n";
    }
    std::string cons = "constraints";
    for (int s : env.true_constraints.states())
        cons += " " + std::to_string(s);
    out += cons + "\n";
    return out;
}

inline void save_env(const std::string& path, const Environment& env) {
    detail::atomic_write_text(path, env_to_text(env));
}

inline Environment load_env(const std::string& path) {
    const auto lines = detail::read_lines(path);
    detail::expect_format(path, lines, "moci-env");

    Environment env;
    env.n = -1;
    env.horizon = -1;
    int start = -1;
    int goal = -1;
    std::vector<std::string> terrain_rows;
    struct Override {
        int line;
        int row;
        int col;
        std::vector<double> values;
    };
    std::vector<Override> overrides;
    std::optional<std::vector<int>> constraints;

    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto& [number, tokens] = lines[i];
        const std::string& key = tokens[0];
        auto need = [&](std::size_t count) {
            if (tokens.size() != count + 1)
                throw ParseError(path, number,
                                 key + " expects " + std::to_string(count) + " value(s)");
        };
        if (key == "n") {
            need(1);
            env.n = static_cast<int>(detail::parse_int(path, number, tokens[1]));
        } else if (key == "horizon") {
            need(1);
            env.horizon = static_cast<int>(detail::parse_int(path, number, tokens[1]));
        } else if (key == "gamma") {
            need(1);
            env.gamma = detail::parse_double(path, number, tokens[1]);
        } else if (key == "start") {
            need(1);
            start = static_cast<int>(detail::parse_int(path, number, tokens[1]));
        } else if (key == "goal") {
            need(1);
            goal = static_cast<int>(detail::parse_int(path, number, tokens[1]));
        } else if (key == "step_feature") {
            need(1);
            env.step_feature = detail::parse_bool(path, number, tokens[1]);
        } else if (key == "terrain") {
            need(1);
            terrain_rows.push_back(tokens[1]);
        } else if (key == "feature") {
            if (tokens.size() < 4)
                throw ParseError(path, number, "feature expects row, col and values");
            Override o;
            o.line = number;
            o.row = static_cast<int>(detail::parse_int(path, number, tokens[1]));
            o.col = static_cast<int>(detail::parse_int(path, number, tokens[2]));
            for (std::size_t j = 3; j < tokens.size(); ++j)
                o.values.push_back(detail::parse_double(path, number, tokens[j]));
            overrides.push_back(std::move(o));
        } else if (key == "constraints") {
            std::vector<int> states;
            for (std::size_t j = 1; j < tokens.size(); ++j)
                states.push_back(static_cast<int>(detail::parse_int(path, number, tokens[j])));
            constraints = std::move(states);
        } else {
            throw ParseError(path, number, "unknown key '" + key + "'");
        }
    }

    if (env.n < 1)
        throw ParseError(path, 0, "missing or invalid field 'n'");
    if (env.horizon < 0)
        throw ParseError(path, 0, "missing or invalid field 'horizon'");
    if (start < 0)
        throw ParseError(path, 0, "missing field 'start'");
    if (goal < 0)
        throw ParseError(path, 0, "missing field 'goal'");
    if (static_cast<int>(terrain_rows.size()) != env.n)
        throw ParseError(path, 0, "expected " + std::to_string(env.n) + " terrain rows, got " +
                                      std::to_string(terrain_rows.size()));

    env.start = start;
    env.goal = goal;
    env.terrain.reserve(static_cast<std::size_t>(env.num_states()));
    for (const auto& row : terrain_rows) {
        if (static_cast<int>(row.size()) != env.n)
            throw ParseError(path, 0, "terrain row '" + row + "' is not " +
                                          std::to_string(env.n) + " cells wide");
        for (char c : row) {
            try {
                env.terrain.push_back(terrain_from_code(c));
            } catch (const std::invalid_argument& e) {
                throw ParseError(path, 0, e.what());
            }
        }
    }

    env.features.reserve(env.terrain.size());
    for (int s = 0; s < env.num_states(); ++s)
        env.features.push_back(env.default_features(env.terrain[static_cast<std::size_t>(s)]));
    for (const auto& o : overrides) {
        if (o.row < 0 || o.row >= env.n || o.col < 0 || o.col >= env.n)
            throw ParseError(path, o.line, "feature cell outside the grid");
        if (o.values.size() != static_cast<std::size_t>(env.feature_dim()))
            throw ParseError(path, o.line,
                             "feature expects " + std::to_string(env.feature_dim()) +
                                 " values, got " + std::to_string(o.values.size()));
        env.features[static_cast<std::size_t>(env.index(o.row, o.col))] = o.values;
    }

    env.true_constraints = ConstraintSet(env.num_states());
    if (constraints) {
        for (int s : *constraints) {
            if (s < 0 || s >= env.num_states())
                throw ParseError(path, 0, "constraint state " + std::to_string(s) +
                                              " outside the grid");
            env.true_constraints.add(s);
        }
    } else {
        for (int s = 0; s < env.num_states(); ++s)
            if (env.terrain[static_cast<std::size_t>(s)] == Terrain::Water)
                env.true_constraints.add(s);
    }

    env.validate();
    return env;
}

// ---------------------------------------------------------------------------
// Demonstration files (format moci-demos 1) and label sidecars
// ---------------------------------------------------------------------------

namespace detail {

inline void check_demos_feasible(const Environment& env, const std::vector<Trajectory>& demos) {
    for (std::size_t i = 0; i < demos.size(); ++i) {
        demos[i].validate(env);
        for (int s : demos[i].states)
            if (env.true_constraints.contains(s))
                throw std::runtime_error("demonstration " + std::to_string(i) +
                                         " intersects a true constraint state");
    }
}

} // namespace detail

inline std::string demos_to_text(const Environment& env, const std::vector<Trajectory>& demos) {
    detail::check_demos_feasible(env, demos);
    std::string out = "format moci-demos 1\n";
    out += "n " + std::to_string(env.n) + "\n";
    out += "horizon " + std::to_string(env.horizon) + "\n";
    out += "start " + std::to_string(env.start) + "\n";
    out += "count " + std::to_string(demos.size()) + "\n";
    for (const auto& traj : demos) {
        std::string line = "demo ";
        for (Action a : traj.actions)
            line += action_code(a);
        out += line + "\n";
    }
    return out;
}

// Labels are never written here; inference input stays unlabeled.
inline void save_demos(const std::string& path, const Environment& env,
                       const std::vector<Trajectory>& demos) {
    detail::atomic_write_text(path, demos_to_text(env, demos));
}

inline std::vector<Trajectory> load_demos(const std::string& path, const Environment& env) {
    const auto lines = detail::read_lines(path);
    detail::expect_format(path, lines, "moci-demos");

    std::optional<long long> count;
    std::vector<Trajectory> demos;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto& [number, tokens] = lines[i];
        const std::string& key = tokens[0];
        auto check_field = [&](const char* name, long long expected) {
            if (tokens.size() != 2)
                throw ParseError(path, number, std::string(name) + " expects one value");
            const long long got = detail::parse_int(path, number, tokens[1]);
            if (got != expected)
                throw ParseError(path, number, std::string(name) + " " + std::to_string(got) +
                                                   " does not match the environment's " +
                                                   std::to_string(expected));
        };
        if (key == "n") {
            check_field("n", env.n);
        } else if (key == "horizon") {
            check_field("horizon", env.horizon);
        } else if (key == "start") {
            check_field("start", env.start);
        } else if (key == "count") {
            if (tokens.size() != 2)
                throw ParseError(path, number, "count expects one value");
            count = detail::parse_int(path, number, tokens[1]);
        } else if (key == "demo") {
            const std::string actions = tokens.size() == 2 ? tokens[1] : "";
            if (tokens.size() > 2)
                throw ParseError(path, number, "demo expects one action string");
            if (static_cast<int>(actions.size()) != env.horizon)
                throw ParseError(path, number, "demo has " + std::to_string(actions.size()) +
                                                   " actions, horizon is " +
                                                   std::to_string(env.horizon));
            Trajectory traj;
            traj.states.reserve(static_cast<std::size_t>(env.horizon) + 1);
            traj.actions.reserve(static_cast<std::size_t>(env.horizon));
            int s = env.start;
            traj.states.push_back(s);
            for (char c : actions) {
                Action a;
                try {
                    a = action_from_code(c);
                } catch (const std::invalid_argument& e) {
                    throw ParseError(path, number, e.what());
                }
                s = step(env, s, a);
                traj.actions.push_back(a);
                traj.states.push_back(s);
            }
            demos.push_back(std::move(traj));
        } else {
            throw ParseError(path, number, "unknown key '" + key + "'");
        }
    }
    if (!count)
        throw ParseError(path, 0, "missing field 'count'");
    if (*count != static_cast<long long>(demos.size()))
        throw ParseError(path, 0, "count " + std::to_string(*count) + " does not match " +
                                      std::to_string(demos.size()) + " demo lines");
    detail::check_demos_feasible(env, demos);
    return demos;
}

// Ground-truth expert assignments, kept out of the demos file so inference
// input stays unlabeled; used only for evaluation.
struct DemoLabels {
    std::vector<std::string> expert_names; // indexed by expert id
    std::vector<int> labels;               // per demonstration, expert id
};

inline std::string labels_to_text(const DemoLabels& labels) {
    std::string out = "format moci-labels 1\n";
    out += "count " + std::to_string(labels.labels.size()) + "\n";
    for (std::size_t k = 0; k < labels.expert_names.size(); ++k)
        out += "expert " + std::to_string(k) + " " + labels.expert_names[k] + "\n";
    for (std::size_t i = 0; i < labels.labels.size(); ++i)
        out += "label " + std::to_string(i) + " " + std::to_string(labels.labels[i]) + "\n";
    return out;
}

inline void save_labels(const std::string& path, const DemoLabels& labels) {
    for (int k : labels.labels)
        if (k < 0 || static_cast<std::size_t>(k) >= labels.expert_names.size())
            throw std::invalid_argument("label refers to an unknown expert");
    detail::atomic_write_text(path, labels_to_text(labels));
}

inline DemoLabels load_labels(const std::string& path) {
    const auto lines = detail::read_lines(path);
    detail::expect_format(path, lines, "moci-labels");

    DemoLabels out;
    std::optional<long long> count;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto& [number, tokens] = lines[i];
        const std::string& key = tokens[0];
        if (key == "count") {
            if (tokens.size() != 2)
                throw ParseError(path, number, "count expects one value");
            count = detail::parse_int(path, number, tokens[1]);
        } else if (key == "expert") {
            if (tokens.size() != 3)
                throw ParseError(path, number, "expert expects an index and a name");
            const auto idx = detail::parse_int(path, number, tokens[1]);
            if (idx != static_cast<long long>(out.expert_names.size()))
                throw ParseError(path, number, "expert indices must be consecutive from 0");
            out.expert_names.push_back(tokens[2]);
        } else if (key == "label") {
            if (tokens.size() != 3)
                throw ParseError(path, number, "label expects a demo index and an expert id");
            const auto idx = detail::parse_int(path, number, tokens[1]);
            if (idx != static_cast<long long>(out.labels.size()))
                throw ParseError(path, number, "label indices must be consecutive from 0");
            out.labels.push_back(static_cast<int>(detail::parse_int(path, number, tokens[2])));
        } else {
            throw ParseError(path, number, "unknown key '" + key + "'");
        }
    }
    if (!count)
        throw ParseError(path, 0, "missing field 'count'");
    if (*count != static_cast<long long>(out.labels.size()))
        throw ParseError(path, 0, "count does not match label lines");
    for (int k : out.labels)
        if (k < 0 || static_cast<std::size_t>(k) >= out.expert_names.size())
            throw ParseError(path, 0, "label refers to an unknown expert");
    return out;
}

// ---------------------------------------------------------------------------
// Model, trace and config files
// ---------------------------------------------------------------------------

inline std::string model_to_text(const MixtureModel& model) {
    model.validate();
    std::string out = "format moci-model 1\n";
    out += "clusters " + std::to_string(model.K()) + "\n";
    out += "features " + std::to_string(model.weights.front().size()) + "\n";
    out += "states " + std::to_string(model.constraints.universe()) + "\n";
    std::string priors = "priors";
    for (double p : model.priors)
        priors += " " + detail::format_double(p);
    out += priors + "\n";
    for (int k = 0; k < model.K(); ++k) {
        std::string line = "weights " + std::to_string(k);
        for (double v : model.weights[static_cast<std::size_t>(k)])
            line += " " + detail::format_double(v);
        out += line + "\n";
    }
    std::string cons = "constraints";
    for (int s : model.constraints.states())
        cons += " " + std::to_string(s);
    out += cons + "\n";
    return out;
}

inline void save_model(const std::string& path, const MixtureModel& model) {
    detail::atomic_write_text(path, model_to_text(model));
}

inline MixtureModel load_model(const std::string& path) {
    const auto lines = detail::read_lines(path);
    detail::expect_format(path, lines, "moci-model");

    int clusters = -1;
    int features = -1;
    int states = -1;
    std::vector<double> priors;
    std::vector<std::pair<int, PreferenceWeights>> weights;
    std::optional<std::vector<int>> constraints;

    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto& [number, tokens] = lines[i];
        const std::string& key = tokens[0];
        if (key == "clusters") {
            clusters = static_cast<int>(detail::parse_int(path, number, tokens.at(1)));
        } else if (key == "features") {
            features = static_cast<int>(detail::parse_int(path, number, tokens.at(1)));
        } else if (key == "states") {
            states = static_cast<int>(detail::parse_int(path, number, tokens.at(1)));
        } else if (key == "priors") {
            for (std::size_t j = 1; j < tokens.size(); ++j)
                priors.push_back(detail::parse_double(path, number, tokens[j]));
        } else if (key == "weights") {
            if (tokens.size() < 2)
                throw ParseError(path, number, "weights expects a cluster index and values");
            const int k = static_cast<int>(detail::parse_int(path, number, tokens[1]));
            PreferenceWeights w;
            for (std::size_t j = 2; j < tokens.size(); ++j)
                w.push_back(detail::parse_double(path, number, tokens[j]));
            weights.emplace_back(k, std::move(w));
        } else if (key == "constraints") {
            std::vector<int> cs;
            for (std::size_t j = 1; j < tokens.size(); ++j)
                cs.push_back(static_cast<int>(detail::parse_int(path, number, tokens[j])));
            constraints = std::move(cs);
        } else {
            throw ParseError(path, number, "unknown key '" + key + "'");
        }
    }

    if (clusters < 1 || features < 1 || states < 1)
        throw ParseError(path, 0, "missing clusters/features/states fields");
    if (static_cast<int>(priors.size()) != clusters)
        throw ParseError(path, 0, "priors line does not match cluster count");
    if (static_cast<int>(weights.size()) != clusters)
        throw ParseError(path, 0, "expected one weights line per cluster");

    MixtureModel model;
    model.priors = priors;
    model.weights.resize(static_cast<std::size_t>(clusters));
    std::vector<bool> seen(static_cast<std::size_t>(clusters), false);
    for (auto& [k, w] : weights) {
        if (k < 0 || k >= clusters || seen[static_cast<std::size_t>(k)])
            throw ParseError(path, 0, "weights cluster indices must cover 0.." +
                                          std::to_string(clusters - 1) + " exactly once");
        if (static_cast<int>(w.size()) != features)
            throw ParseError(path, 0, "weights line does not match feature count");
        seen[static_cast<std::size_t>(k)] = true;
        model.weights[static_cast<std::size_t>(k)] = std::move(w);
    }
    model.constraints = ConstraintSet(states);
    if (constraints)
        for (int s : *constraints) {
            if (s < 0 || s >= states)
                throw ParseError(path, 0, "constraint state outside the state space");
            model.constraints.add(s);
        }
    model.validate();
    return model;
}

inline std::string trace_to_text(const Trace& trace) {
    std::string out = "format moci-trace 1\n";
    out += "converged " + std::string(trace.converged ? "1" : "0") + "\n";
    for (const auto& rec : trace.iterations) {
        std::string line = "iteration " + std::to_string(rec.iteration) + " " +
                           detail::format_double(rec.avg_ll) + " " +
                           std::to_string(rec.constraints_total) + " " +
                           std::to_string(rec.constraints_added);
        for (double p : rec.priors)
            line += " " + detail::format_double(p);
        out += line + "\n";
    }
    for (const auto& acc : trace.acceptances)
        out += "acceptance " + std::to_string(acc.iteration) + " " +
               std::to_string(acc.state) + " " + detail::format_double(acc.gain) + "\n";
    return out;
}

inline void save_trace(const std::string& path, const Trace& trace) {
    detail::atomic_write_text(path, trace_to_text(trace));
}

inline Trace load_trace(const std::string& path) {
    const auto lines = detail::read_lines(path);
    detail::expect_format(path, lines, "moci-trace");

    Trace trace;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto& [number, tokens] = lines[i];
        const std::string& key = tokens[0];
        if (key == "converged") {
            if (tokens.size() != 2)
                throw ParseError(path, number, "converged expects one value");
            trace.converged = detail::parse_bool(path, number, tokens[1]);
        } else if (key == "iteration") {
            if (tokens.size() < 5)
                throw ParseError(path, number, "iteration expects at least 4 values");
            IterationRecord rec;
            rec.iteration = static_cast<int>(detail::parse_int(path, number, tokens[1]));
            rec.avg_ll = detail::parse_double(path, number, tokens[2]);
            rec.constraints_total = static_cast<int>(detail::parse_int(path, number, tokens[3]));
            rec.constraints_added = static_cast<int>(detail::parse_int(path, number, tokens[4]));
            for (std::size_t j = 5; j < tokens.size(); ++j)
                rec.priors.push_back(detail::parse_double(path, number, tokens[j]));
            trace.iterations.push_back(std::move(rec));
        } else if (key == "acceptance") {
            if (tokens.size() != 4)
                throw ParseError(path, number, "acceptance expects 3 values");
            ConstraintAcceptance acc;
            acc.iteration = static_cast<int>(detail::parse_int(path, number, tokens[1]));
            acc.state = static_cast<int>(detail::parse_int(path, number, tokens[2]));
            acc.gain = detail::parse_double(path, number, tokens[3]);
            trace.acceptances.push_back(acc);
        } else {
            throw ParseError(path, number, "unknown key '" + key + "'");
        }
    }
    return trace;
}

// Inference settings as persisted: the full config plus the cluster count.
struct InferenceSettings {
    InferenceConfig config;
    int k = 2;
};

inline std::string config_to_text(const InferenceConfig& cfg, int k) {
    std::string out = "format moci-config 1\n";
    out += "d_dkl " + detail::format_double(cfg.d_dkl) + "\n";
    out += "alpha " + detail::format_double(cfg.alpha) + "\n";
    out += "i_irl " + std::to_string(cfg.i_irl) + "\n";
    out += "i_iter " + std::to_string(cfg.i_iter) + "\n";
    out += "em_tol " + detail::format_double(cfg.em_tol) + "\n";
    if (cfg.m_test)
        out += "m_test " + std::to_string(*cfg.m_test) + "\n";
    out += "seed " + std::to_string(cfg.seed) + "\n";
    out += "init_scale " + detail::format_double(cfg.init_scale) + "\n";
    out += "normalized_gain " + std::string(cfg.normalized_gain ? "1" : "0") + "\n";
    out += "k " + std::to_string(k) + "\n";
    return out;
}

inline void save_config(const std::string& path, const InferenceConfig& cfg, int k) {
    detail::atomic_write_text(path, config_to_text(cfg, k));
}

inline InferenceSettings load_config(const std::string& path) {
    const auto lines = detail::read_lines(path);
    detail::expect_format(path, lines, "moci-config");

    InferenceSettings out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto& [number, tokens] = lines[i];
        const std::string& key = tokens[0];
        if (tokens.size() != 2)
            throw ParseError(path, number, key + " expects one value");
        const std::string& value = tokens[1];
        if (key == "d_dkl")
            out.config.d_dkl = detail::parse_double(path, number, value);
        else if (key == "alpha")
            out.config.alpha = detail::parse_double(path, number, value);
        else if (key == "i_irl")
            out.config.i_irl = static_cast<int>(detail::parse_int(path, number, value));
        else if (key == "i_iter")
            out.config.i_iter = static_cast<int>(detail::parse_int(path, number, value));
        else if (key == "em_tol")
            out.config.em_tol = detail::parse_double(path, number, value);
        else if (key == "m_test")
            out.config.m_test = static_cast<int>(detail::parse_int(path, number, value));
        else if (key == "seed")
            out.config.seed = detail::parse_u64(path, number, value);
        else if (key == "init_scale")
            out.config.init_scale = detail::parse_double(path, number, value);
        else if (key == "normalized_gain")
            out.config.normalized_gain = detail::parse_bool(path, number, value);
        else if (key == "k")
            out.k = static_cast<int>(detail::parse_int(path, number, value));
        else
            throw ParseError(path, number, "unknown key '" + key + "'");
    }
    out.config.validate();
    if (out.k < 1)
        throw ParseError(path, 0, "k must be at least 1");
    return out;
}

// Stable identifier for a (config, K) pair: FNV-1a over the canonical
// serialized form.
inline std::string config_digest(const InferenceConfig& cfg, int k) {
    return detail::hex64(detail::fnv1a64(config_to_text(cfg, k)));
}

// ---------------------------------------------------------------------------
// Results tables (comma-separated records with '#' metadata lines)
// ---------------------------------------------------------------------------

// One evaluated run, flattened for the results table.
struct ReportRow {
    std::string method;  // moci | mlci | single
    std::uint64_t seed = 0;
    int n = 0;
    int horizon = 0;
    int demo_count = 0;
    int k = 1;
    double d_dkl = 0.05;
    double cmse = 0.0;
    double precision = 1.0;
    double recall = 1.0;
    double f1 = 1.0;
    double fpr = 0.0;
    double avg_ll = 0.0;
    double weight_error_mean = 0.0; // nan when ground-truth weights are unknown
    double runtime_s = 0.0;
    std::string config_digest;
};

inline constexpr const char* kReportHeader =
    "method,seed,n,horizon,demo_count,k,d_dkl,cmse,precision,recall,f1,fpr,avg_ll,"
    "weight_error_mean,runtime_s,config_digest";

inline std::string report_row_to_csv(const ReportRow& r) {
    std::string out = r.method;
    out += "," + std::to_string(r.seed);
    out += "," + std::to_string(r.n);
    out += "," + std::to_string(r.horizon);
    out += "," + std::to_string(r.demo_count);
    out += "," + std::to_string(r.k);
    out += "," + detail::format_double(r.d_dkl);
    out += "," + detail::format_double(r.cmse);
    out += "," + detail::format_double(r.precision);
    out += "," + detail::format_double(r.recall);
    out += "," + detail::format_double(r.f1);
    out += "," + detail::format_double(r.fpr);
    out += "," + detail::format_double(r.avg_ll);
    out += "," + detail::format_double(r.weight_error_mean);
    out += "," + detail::format_double(r.runtime_s);
    out += "," + r.config_digest;
    return out;
}

inline void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows,
                             const std::vector<std::string>& metadata = {}) {
    std::string out = "# moci-report 1\n";
    out += "# cmse_universe all_states\n";
    out += "# confusion_universe exclude_start_goal\n";
    for (const auto& m : metadata)
        out += "# " + m + "\n";
    out += std::string(kReportHeader) + "\n";
    for (const auto& r : rows)
        out += report_row_to_csv(r) + "\n";
    detail::atomic_write_text(path, out);
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

} // namespace detail

inline std::vector<ReportRow> read_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::vector<ReportRow> rows;
    std::string line;
    int number = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty() || line.front() == '#')
            continue;
        if (!header_seen) {
            if (line != kReportHeader)
                throw ParseError(path, number, "unexpected results-table header");
            header_seen = true;
            continue;
        }
        const auto fields = detail::split_csv(line);
        if (fields.size() != 16)
            throw ParseError(path, number, "expected 16 fields, got " +
                                               std::to_string(fields.size()));
        ReportRow r;
        r.method = fields[0];
        r.seed = detail::parse_u64(path, number, fields[1]);
        r.n = static_cast<int>(detail::parse_int(path, number, fields[2]));
        r.horizon = static_cast<int>(detail::parse_int(path, number, fields[3]));
        r.demo_count = static_cast<int>(detail::parse_int(path, number, fields[4]));
        r.k = static_cast<int>(detail::parse_int(path, number, fields[5]));
        r.d_dkl = detail::parse_double(path, number, fields[6]);
        r.cmse = detail::parse_double(path, number, fields[7]);
        r.precision = detail::parse_double(path, number, fields[8]);
        r.recall = detail::parse_double(path, number, fields[9]);
        r.f1 = detail::parse_double(path, number, fields[10]);
        r.fpr = detail::parse_double(path, number, fields[11]);
        r.avg_ll = detail::parse_double(path, number, fields[12]);
        r.weight_error_mean = detail::parse_double(path, number, fields[13]);
        r.runtime_s = detail::parse_double(path, number, fields[14]);
        r.config_digest = fields[15];
        rows.push_back(std::move(r));
    }
    if (!header_seen)
        throw ParseError(path, 0, "missing results-table header");
    return rows;
}

} // namespace moci
