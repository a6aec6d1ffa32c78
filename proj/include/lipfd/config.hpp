#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <type_traits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "lipfd/bench.hpp"
#include "lipfd/manipulator.hpp"
#include "lipfd/synthesis.hpp"

namespace lipfd::config {

using json = nlohmann::json;

inline constexpr int schema_version = 1;
inline constexpr const char* tool_version = "0.1.0";

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    // plant
    std::string preset = "symbolic";
    std::optional<std::string> model_file;
    // synthesis
    double beta = 1.0;
    double lambda = 0.2;
    std::optional<double> delta;
    double objective_weight = 1.0;
    std::string form = "dilated";
    // scenario
    int scenario = 1;
    std::vector<int> scenarios{1, 2, 3, 4, 5};
    double input = 1.0;
    manipulator::AbruptFault abrupt;
    manipulator::GradualFault gradual;
    // grid and window
    double dt = 1e-4;
    double duration = 10.0;
    long long window_t0 = 80;
    long long window_len = 1000;
    // noise and calibration
    double noise_fraction = 0.02;
    std::uint64_t seed = 1;
    int calibration_runs = 5;
    double safety_factor = 1.0;
    std::vector<std::string> residuals{"arr", "earr", "iearr"};
    std::string output = "out";

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};


namespace detail {

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("", "must be an object");
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw ConfigError("config: " + qualified(key) + " " + what);
    }

    [[nodiscard]] std::string qualified(const std::string& key) const {
        if (path_.empty()) return key.empty() ? "<root>" : key;
        return key.empty() ? path_ : path_ + "." + key;
    }

    void only(std::initializer_list<const char*> allowed) const {
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!ok.count(it.key())) fail(it.key(), "is not a recognized key");
        }
    }

    [[nodiscard]] bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    [[nodiscard]] Reader child(const char* key) const { return Reader(j_.at(key), qualified(key)); }

    void number(const char* key, double& out) const {
        if (!has(key)) return;
        if (!j_.at(key).is_number()) fail(key, "must be a number");
        out = j_.at(key).get<double>();
    }

    template <class Int>
    void integer(const char* key, Int& out) const {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_number_integer()) fail(key, "must be an integer");
        if constexpr (std::is_unsigned_v<Int>) {
            if (v.is_number_unsigned()) out = static_cast<Int>(v.get<std::uint64_t>());
            else if (v.get<long long>() < 0) fail(key, "must be nonnegative");
            else out = static_cast<Int>(v.get<long long>());
        } else {
            out = static_cast<Int>(v.get<long long>());
        }
    }

    void string(const char* key, std::string& out) const {
        if (!has(key)) return;
        if (!j_.at(key).is_string()) fail(key, "must be a string");
        out = j_.at(key).get<std::string>();
    }

    [[nodiscard]] const json& raw(const char* key) const { return j_.at(key); }

private:
    const json& j_;
    std::string path_;
};

inline void positive(const Reader& r, const char* key, double v) {
    if (!(v > 0.0)) r.fail(key, "must be > 0");
}

}  // namespace detail

inline void validate(const RunConfig& c) {
    auto bad = [](const std::string& key, const std::string& what) { throw ConfigError("config: " + key + " " + what); };
    if (c.preset != "symbolic" && c.preset != "paper-literal") bad("plant.preset", "must be symbolic or paper-literal");
    if (!(c.beta > 0.0)) bad("synthesis.beta", "must be > 0");
    if (!(c.lambda > 0.0)) bad("synthesis.lambda", "must be > 0");
    if (c.delta && !(*c.delta > 0.0)) bad("synthesis.delta", "must be > 0");
    if (!(c.objective_weight > 0.0)) bad("synthesis.objective_weight", "must be > 0");
    if (c.form != "printed" && c.form != "dilated") bad("synthesis.form", "must be printed or dilated");
    if (c.scenario < 1 || c.scenario > 5) bad("scenario.id", "must be in 1..5");
    if (c.scenarios.empty()) bad("scenarios", "must not be empty");
    for (int s : c.scenarios) {
        if (s < 1 || s > 5) bad("scenarios", "entries must be in 1..5");
    }
    if (!(c.abrupt.width > 0.0)) bad("scenario.abrupt.width", "must be > 0");
    if (c.abrupt.channel < 0 || c.abrupt.channel > 1) bad("scenario.abrupt.channel", "must be 0 or 1");
    if (!(c.gradual.slope > 0.0)) bad("scenario.gradual.slope", "must be > 0");
    if (!(c.gradual.saturation > 0.0)) bad("scenario.gradual.saturation", "must be > 0");
    if (c.gradual.channel < 0 || c.gradual.channel > 1) bad("scenario.gradual.channel", "must be 0 or 1");
    if (!(c.dt > 0.0)) bad("grid.dt", "must be > 0");
    if (!(c.duration > 0.0)) bad("grid.duration", "must be > 0");
    if (c.window_t0 < 0) bad("window.t0", "must be >= 0");
    if (c.window_len < 1) bad("window.length", "must be >= 1");
    if (static_cast<double>(c.window_t0 + c.window_len) > c.duration / c.dt + 1.0) bad("window", "exceeds the run length");
    if (!(c.noise_fraction >= 0.0)) bad("noise.fraction", "must be >= 0");
    if (c.calibration_runs < 1) bad("noise.calibration_runs", "must be >= 1");
    if (!(c.safety_factor >= 1.0)) bad("threshold.safety_factor", "must be >= 1");
    if (c.residuals.empty()) bad("residuals", "must not be empty");
    for (const auto& r : c.residuals) {
        if (r != "arr" && r != "earr" && r != "iearr") bad("residuals", "entries must be arr, earr or iearr");
    }
    if (c.output.empty()) bad("output", "must not be empty");
}

inline RunConfig parse(const json& j) {
    using detail::Reader;
    RunConfig c;
    const Reader root(j, "");
    root.only({"version", "plant", "synthesis", "scenario", "scenarios", "grid", "window", "noise", "threshold",
               "residuals", "output"});
    if (!root.has("version")) root.fail("version", "is required");
    int version = 0;
    root.integer("version", version);
    if (version != schema_version) root.fail("version", "must be " + std::to_string(schema_version));

    if (root.has("plant")) {
        const Reader p = root.child("plant");
        p.only({"preset", "model_file"});
        p.string("preset", c.preset);
        if (p.has("model_file")) {
            std::string f;
            p.string("model_file", f);
            c.model_file = f;
        }
    }
    if (root.has("synthesis")) {
        const Reader s = root.child("synthesis");
        s.only({"beta", "lambda", "delta", "objective_weight", "form"});
        s.number("beta", c.beta);
        s.number("lambda", c.lambda);
        if (s.has("delta")) {
            double d = 0.0;
            s.number("delta", d);
            c.delta = d;
        }
        s.number("objective_weight", c.objective_weight);
        s.string("form", c.form);
        detail::positive(s, "beta", c.beta);
        detail::positive(s, "lambda", c.lambda);
    }
    if (root.has("scenario")) {
        const Reader s = root.child("scenario");
        s.only({"id", "input", "abrupt", "gradual"});
        s.integer("id", c.scenario);
        s.number("input", c.input);
        if (s.has("abrupt")) {
            const Reader a = s.child("abrupt");
            a.only({"onset", "width", "amplitude", "channel"});
            a.number("onset", c.abrupt.onset);
            a.number("width", c.abrupt.width);
            a.number("amplitude", c.abrupt.amplitude);
            a.integer("channel", c.abrupt.channel);
        }
        if (s.has("gradual")) {
            const Reader g = s.child("gradual");
            g.only({"onset", "slope", "saturation", "channel"});
            g.number("onset", c.gradual.onset);
            g.number("slope", c.gradual.slope);
            g.number("saturation", c.gradual.saturation);
            g.integer("channel", c.gradual.channel);
        }
    }
    if (root.has("scenarios")) {
        const json& v = root.raw("scenarios");
        if (!v.is_array()) root.fail("scenarios", "must be an array of scenario ids");
        c.scenarios.clear();
        for (const auto& e : v) {
            if (!e.is_number_integer()) root.fail("scenarios", "entries must be integers");
            c.scenarios.push_back(e.get<int>());
        }
    }
    if (root.has("grid")) {
        const Reader g = root.child("grid");
        g.only({"dt", "duration"});
        g.number("dt", c.dt);
        g.number("duration", c.duration);
    }
    if (root.has("window")) {
        const Reader w = root.child("window");
        w.only({"t0", "length"});
        w.integer("t0", c.window_t0);
        w.integer("length", c.window_len);
    }
    if (root.has("noise")) {
        const Reader n = root.child("noise");
        n.only({"fraction", "seed", "calibration_runs"});
        n.number("fraction", c.noise_fraction);
        n.integer("seed", c.seed);
        n.integer("calibration_runs", c.calibration_runs);
    }
    if (root.has("threshold")) {
        const Reader t = root.child("threshold");
        t.only({"safety_factor"});
        t.number("safety_factor", c.safety_factor);
    }
    if (root.has("residuals")) {
        const json& v = root.raw("residuals");
        if (!v.is_array()) root.fail("residuals", "must be an array");
        c.residuals.clear();
        for (const auto& e : v) {
            if (!e.is_string()) root.fail("residuals", "entries must be strings");
            c.residuals.push_back(e.get<std::string>());
        }
    }
    root.string("output", c.output);
    validate(c);
    return c;
}

inline RunConfig parse_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: not valid JSON: ") + e.what());
    }
    return parse(j);
}

inline RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

inline json to_json(const RunConfig& c) {
    json j;
    j["version"] = schema_version;
    j["plant"] = {{"preset", c.preset}};
    if (c.model_file) j["plant"]["model_file"] = *c.model_file;
    j["synthesis"] = {{"beta", c.beta}, {"lambda", c.lambda}, {"objective_weight", c.objective_weight}, {"form", c.form}};
    if (c.delta) j["synthesis"]["delta"] = *c.delta;
    j["scenario"] = {{"id", c.scenario},
                     {"input", c.input},
                     {"abrupt",
                      {{"onset", c.abrupt.onset},
                       {"width", c.abrupt.width},
                       {"amplitude", c.abrupt.amplitude},
                       {"channel", c.abrupt.channel}}},
                     {"gradual",
                      {{"onset", c.gradual.onset},
                       {"slope", c.gradual.slope},
                       {"saturation", c.gradual.saturation},
                       {"channel", c.gradual.channel}}}};
    j["scenarios"] = c.scenarios;
    j["grid"] = {{"dt", c.dt}, {"duration", c.duration}};
    j["window"] = {{"t0", c.window_t0}, {"length", c.window_len}};
    j["noise"] = {{"fraction", c.noise_fraction}, {"seed", c.seed}, {"calibration_runs", c.calibration_runs}};
    j["threshold"] = {{"safety_factor", c.safety_factor}};
    j["residuals"] = c.residuals;
    j["output"] = c.output;
    return j;
}

/// 64-bit FNV-1a of the canonical (key-sorted, compact) serialization.
inline std::string hash(const RunConfig& c) {
    const std::string text = to_json(c).dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline json manifest(const RunConfig& c, const std::string& command) {
    return json{{"tool", "lipfd"},
                {"version", tool_version},
                {"command", command},
                {"config_hash", hash(c)},
                {"seed", c.seed},
                {"config", to_json(c)}};
}

inline manipulator::ScenarioSpec scenario_template(const RunConfig& c) {
    manipulator::ScenarioSpec s;
    s.abrupt = c.abrupt;
    s.gradual = c.gradual;
    s.window_t0 = static_cast<Eigen::Index>(c.window_t0);
    s.window_len = static_cast<Eigen::Index>(c.window_len);
    s.duration = c.duration;
    s.dt = c.dt;
    s.input = c.input;
    s.noise_fraction = c.noise_fraction;
    return s;
}

inline bench::Options bench_options(const RunConfig& c) {
    bench::Options o;
    o.preset = manipulator::parse_preset(c.preset);
    o.beta = c.beta;
    o.lambda = c.lambda;
    o.delta = c.delta;
    o.objective_weight = c.objective_weight;
    o.form = parse_lmi_form(c.form);
    o.scenarios = c.scenarios;
    o.families.clear();
    for (const auto& r : c.residuals) o.families.push_back(bench::parse_family(r));
    o.base = scenario_template(c);
    o.seed = c.seed;
    o.calibration_runs = c.calibration_runs;
    o.safety_factor = c.safety_factor;
    return o;
}

}  // namespace lipfd::config
