#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lipfd/manipulator.hpp"
#include "lipfd/residuals.hpp"
#include "lipfd/simulator.hpp"
#include "lipfd/synthesis.hpp"

namespace lipfd::bench {

namespace mp = lipfd::manipulator;

/// Worker count: hardware concurrency, capped by LIPFD_THREADS when set.
inline unsigned job_threads(unsigned requested = 0) {
    unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("LIPFD_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap > 0) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
    return std::max(1u, n);
}

/// Runs fn(0..count-1) on up to `threads` workers; the first exception is rethrown.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = count;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

inline ResidualKind parse_family(const std::string& s) {
    if (s == "arr" || s == "ARR") return ResidualKind::ARR;
    if (s == "earr" || s == "EARR") return ResidualKind::EARR;
    if (s == "iearr" || s == "IEARR") return ResidualKind::IEARR;
    if (s == "earr_linear" || s == "EARR_linear") return ResidualKind::EARR_linear;
    throw ContractViolation("unknown residual family '" + s + "'");
}

inline std::string family_tag(ResidualKind k) {
    std::string s = to_string(k);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

struct Options {
    mp::Preset preset = mp::Preset::symbolic;
    mp::Params params;
    double beta = 1.0;
    double lambda = 0.2;
    std::optional<double> delta;
    double objective_weight = 1.0;
    LmiForm form = LmiForm::dilated;
    std::vector<int> scenarios{1, 2, 3, 4, 5};
    std::vector<ResidualKind> families{ResidualKind::ARR, ResidualKind::EARR, ResidualKind::IEARR};
    mp::ScenarioSpec base;     // grid, window, input, fault and noise parameters shared by all scenarios
    std::uint64_t seed = 1;    // noise seed of the evaluated runs
    int calibration_runs = 5;  // noisy fault-free runs behind the noise-aware thresholds
    double safety_factor = 1.0;
    unsigned threads = 0;
};

class DesignUnavailable : public std::runtime_error {
public:
    DesignUnavailable(const std::string& what, sdp::Status status) : std::runtime_error(what), status_(status) {}
    [[nodiscard]] sdp::Status status() const { return status_; }

private:
    sdp::Status status_;
};

inline mp::ScenarioSpec scenario_from(const Options& o, int id, std::uint64_t seed) {
    mp::ScenarioSpec s = mp::ScenarioSpec::preset(id, seed);
    const mp::ScenarioSpec& b = o.base;
    s.abrupt = b.abrupt;
    s.gradual = b.gradual;
    s.window_t0 = b.window_t0;
    s.window_len = b.window_len;
    s.duration = b.duration;
    s.dt = b.dt;
    s.input = b.input;
    s.noise_fraction = b.noise_fraction;
    return s;
}

/// Calibration seeds never coincide with the evaluation seed.
inline std::vector<std::uint64_t> calibration_seeds(std::uint64_t seed, int runs) {
    std::vector<std::uint64_t> out;
    for (int j = 1; j <= runs; ++j) out.push_back(seed * 1000u + 500u + static_cast<std::uint64_t>(j));
    return out;
}

struct FamilyResult {
    ResidualTrace residual;
    EvaluationTrace evaluation;
    DetectionReport detection;
    std::optional<double> delay;  // first alarm minus fault onset
};

struct ScenarioResult {
    mp::ScenarioSpec spec;
    SimOutput sim;
    std::map<ResidualKind, FamilyResult> families;
};

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct Result {
    LipschitzPlant plant;
    ObserverDesign design;
    ResidualStructure structure;
    Vector noise_reference;
    std::map<ResidualKind, ThresholdSet> clean_thresholds;
    std::map<ResidualKind, ThresholdSet> noisy_thresholds;
    std::vector<ScenarioResult> scenarios;
    std::vector<Check> checks;

    [[nodiscard]] bool all_pass() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    }

    [[nodiscard]] const ScenarioResult* scenario(int id) const {
        for (const auto& s : scenarios) {
            if (s.spec.id == id) return &s;
        }
        return nullptr;
    }

    [[nodiscard]] const ThresholdSet& thresholds_for(const mp::ScenarioSpec& s, ResidualKind k) const {
        return s.noise_on ? noisy_thresholds.at(k) : clean_thresholds.at(k);
    }
};

inline ObserverDesign synthesize(const LipschitzPlant& plant, const Options& o) {
    SynthesisProblem sp = SynthesisProblem::from_plant(plant, o.beta, o.lambda);
    if (o.delta) sp.delta = *o.delta;
    SynthesisOptions so;
    so.form = o.form;
    so.objective_weight = o.objective_weight;
    return solve_design(sp, so);
}

inline std::map<ResidualKind, EvaluationTrace> evaluate_families(const ResidualStructure& rs, const SimOutput& sim,
                                                                 const std::vector<ResidualKind>& families,
                                                                 const mp::ScenarioSpec& s,
                                                                 std::map<ResidualKind, ResidualTrace>* keep = nullptr) {
    std::map<ResidualKind, EvaluationTrace> out;
    for (auto k : families) {
        ResidualTrace tr = mp::compute_residual(k, rs, sim);
        out[k] = eval_window_norm(tr, s.window_t0, s.window_len);
        if (keep) (*keep)[k] = std::move(tr);
    }
    return out;
}

namespace detail {

inline std::string fmt(double v, const char* f = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

inline bool has(const std::vector<ResidualKind>& v, ResidualKind k) { return std::find(v.begin(), v.end(), k) != v.end(); }

inline void add_checks(Result& r, const Options& o) {
    const auto& fam = o.families;
    // central-difference stencils reach two samples ahead
    const double lead = 2.0 * o.base.dt;

    if (const auto* s1 = r.scenario(1)) {
        for (const auto& [k, fr] : s1->families) {
            r.checks.push_back({"scenario1_no_alarm_" + to_string(k), !fr.detection.alarm,
                                "peak J/J_th " + fmt(fr.detection.max_peak_ratio())});
        }
    }
    for (auto other : {ResidualKind::EARR, ResidualKind::IEARR}) {
        if (!has(fam, ResidualKind::ARR) || !has(fam, other)) continue;
        const Vector& a = r.clean_thresholds.at(ResidualKind::ARR).J_th;
        const Vector& b = r.clean_thresholds.at(other).J_th;
        bool ok = true;
        std::string detail;
        for (Eigen::Index c = 0; c < a.size(); ++c) {
            const double ratio = b(c) > 0.0 ? a(c) / b(c) : std::numeric_limits<double>::infinity();
            ok = ok && ratio >= 100.0;
            detail += (c ? " " : "") + std::string("ch") + std::to_string(c + 1) + "=" + fmt(ratio);
        }
        r.checks.push_back({"threshold_ratio_ARR_" + to_string(other) + ">=100", ok, detail});
    }
    if (const auto* s2 = r.scenario(2)) {
        const double onset = s2->spec.abrupt.onset;
        for (auto k : {ResidualKind::EARR, ResidualKind::IEARR}) {
            if (!s2->families.count(k)) continue;
            const auto& det = s2->families.at(k).detection;
            const auto t = det.first_alarm_time();
            const bool ok = t && *t >= onset - lead && *t - onset <= 0.5;
            r.checks.push_back({"scenario2_delay_" + to_string(k) + "<=0.5s", ok,
                                t ? "delay " + fmt(*t - onset) + " s" : std::string("no alarm")});
        }
        if (s2->families.count(ResidualKind::EARR)) {
            const double peak = s2->families.at(ResidualKind::EARR).detection.max_peak_ratio();
            r.checks.push_back({"scenario2_peak_EARR>=5", peak >= 5.0, "peak J/J_th " + fmt(peak)});
        }
    }
    if (const auto* s3 = r.scenario(3)) {
        const double onset = s3->spec.gradual.onset;
        const double half = s3->spec.gradual.time_to_fraction(0.5);
        for (auto k : {ResidualKind::EARR, ResidualKind::IEARR}) {
            if (!s3->families.count(k)) continue;
            const auto t = s3->families.at(k).detection.first_alarm_time();
            const bool ok = t && *t >= onset - lead && *t < half;
            r.checks.push_back({"scenario3_alarm_before_half_saturation_" + to_string(k), ok,
                                t ? "alarm at " + fmt(*t) + " s (half saturation at " + fmt(half) + " s)"
                                  : std::string("no alarm")});
        }
    }
    if (const auto* s5 = r.scenario(5); s5 && s5->families.count(ResidualKind::EARR) && s5->families.count(ResidualKind::IEARR)) {
        const double e = s5->families.at(ResidualKind::EARR).detection.max_peak_ratio();
        const double i = s5->families.at(ResidualKind::IEARR).detection.max_peak_ratio();
        r.checks.push_back({"scenario5_margin_IEARR>=EARR", i >= e, "IEARR " + fmt(i) + " EARR " + fmt(e)});
    }
    if (const auto* s4 = r.scenario(4); s4 && s4->families.count(ResidualKind::EARR) && s4->families.count(ResidualKind::ARR)) {
        const double e = s4->families.at(ResidualKind::EARR).detection.max_peak_ratio();
        const double a = s4->families.at(ResidualKind::ARR).detection.max_peak_ratio();
        r.checks.push_back({"scenario4_noise_floor_EARR<ARR", e < a, "EARR " + fmt(e) + " ARR " + fmt(a)});
    }
}

}  // namespace detail

/// Synthesizes (unless a design is supplied), calibrates on scenario 1 and on noisy
/// fault-free runs, then runs and evaluates the requested scenarios.
inline Result run(const Options& o, std::optional<ObserverDesign> design = std::nullopt) {
    require(!o.families.empty(), "bench: no residual families selected");
    require(o.calibration_runs >= 1, "bench: need at least one calibration run");
    for (int id : o.scenarios) require(id >= 1 && id <= 5, "bench: scenario id must be in 1..5");
    const unsigned threads = job_threads(o.threads);

    Result r;
    r.plant = mp::build_plant(o.params, o.preset);
    r.design = design ? *design : synthesize(r.plant, o);
    if (!r.design.usable()) {
        throw DesignUnavailable("observer synthesis failed: " + sdp::to_string(r.design.solver_status) + " (" +
                                    r.design.solver_message + ")",
                                r.design.solver_status);
    }
    if (!r.design.certificates.pass && !design) {
        throw DesignUnavailable("observer certificates do not pass", sdp::Status::numerical_failure);
    }
    r.structure = mp::build_residual_structure(o.params, r.design.gamma);

    // scenario 1 sets both the clean thresholds and the noise amplitude reference
    const mp::ScenarioSpec s1 = scenario_from(o, 1, o.seed);
    SimOutput sim1 = mp::simulate(r.plant, r.design.L, s1);
    r.noise_reference = mp::amplitude_reference(sim1);
    std::map<ResidualKind, ResidualTrace> traces1;
    auto ev1 = evaluate_families(r.structure, sim1, o.families, s1, &traces1);
    for (auto& [k, ev] : ev1) r.clean_thresholds[k] = calibrate_threshold({ev}, o.safety_factor, {"scenario1"});

    const bool needs_noise = std::any_of(o.scenarios.begin(), o.scenarios.end(), [&](int id) {
        return scenario_from(o, id, o.seed).noise_on;
    });

    struct Job {
        mp::ScenarioSpec spec;
        bool calibration = false;
    };
    std::vector<Job> jobs;
    if (needs_noise) {
        for (auto seed : calibration_seeds(o.seed, o.calibration_runs)) jobs.push_back({scenario_from(o, 4, seed), true});
    }
    for (int id : o.scenarios) {
        if (id != 1) jobs.push_back({scenario_from(o, id, o.seed), false});
    }

    struct JobOutput {
        std::optional<SimOutput> sim;
        std::map<ResidualKind, ResidualTrace> traces;
        std::map<ResidualKind, EvaluationTrace> evals;
    };
    std::vector<JobOutput> outputs(jobs.size());
    parallel_for(jobs.size(), threads, [&](std::size_t i) {
        const Job& job = jobs[i];
        SimOutput sim = mp::simulate(r.plant, r.design.L, job.spec, r.noise_reference);
        auto& out = outputs[i];
        out.evals = evaluate_families(r.structure, sim, o.families, job.spec, job.calibration ? nullptr : &out.traces);
        if (!job.calibration) out.sim = std::move(sim);
    });

    if (needs_noise) {
        for (auto k : o.families) {
            std::vector<EvaluationTrace> cal;
            std::vector<std::string> ids;
            for (std::size_t i = 0; i < jobs.size(); ++i) {
                if (!jobs[i].calibration) continue;
                cal.push_back(outputs[i].evals.at(k));
                ids.push_back("scenario4_seed" + std::to_string(jobs[i].spec.seed));
            }
            r.noisy_thresholds[k] = calibrate_threshold(cal, o.safety_factor, ids);
        }
    }

    auto finish = [&](const mp::ScenarioSpec& spec, SimOutput sim, std::map<ResidualKind, ResidualTrace> traces,
                      std::map<ResidualKind, EvaluationTrace> evals) {
        ScenarioResult sr;
        sr.spec = spec;
        sr.sim = std::move(sim);
        for (auto k : o.families) {
            FamilyResult fr;
            fr.residual = std::move(traces.at(k));
            fr.evaluation = std::move(evals.at(k));
            fr.detection = detect(fr.evaluation, r.thresholds_for(spec, k));
            const auto onset = spec.fault_onset();
            const auto t = fr.detection.first_alarm_time();
            if (onset && t) fr.delay = *t - *onset;
            sr.families.emplace(k, std::move(fr));
        }
        r.scenarios.push_back(std::move(sr));
    };

    for (int id : o.scenarios) {
        if (id == 1) {
            finish(s1, sim1, traces1, ev1);
            continue;
        }
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            if (!jobs[i].calibration && jobs[i].spec.id == id && outputs[i].sim) {
                finish(jobs[i].spec, std::move(*outputs[i].sim), std::move(outputs[i].traces), std::move(outputs[i].evals));
                outputs[i].sim.reset();
                break;
            }
        }
    }
    detail::add_checks(r, o);
    return r;
}

/// Thresholds, peak evaluations, delays, threshold ratios and checks as plain text.
inline std::string report_summary(const Result& r) {
    require(!r.clean_thresholds.empty(), "report: calibration missing");
    std::ostringstream os;
    using detail::fmt;
    os << "observer: mu=" << fmt(r.design.mu) << " gamma=" << fmt(r.design.gamma)
       << " status=" << sdp::to_string(r.design.solver_status)
       << " certificates=" << (r.design.certificates.pass ? "PASS" : "FAIL") << "\n";
    os << "thresholds (fault-free, no noise):\n";
    for (const auto& [k, th] : r.clean_thresholds) {
        os << "  " << to_string(k) << ":";
        for (Eigen::Index c = 0; c < th.J_th.size(); ++c) os << ' ' << fmt(th.J_th(c));
        os << "\n";
    }
    if (!r.noisy_thresholds.empty()) {
        os << "thresholds (fault-free, with noise):\n";
        for (const auto& [k, th] : r.noisy_thresholds) {
            os << "  " << to_string(k) << ":";
            for (Eigen::Index c = 0; c < th.J_th.size(); ++c) os << ' ' << fmt(th.J_th(c));
            os << "\n";
        }
    }
    if (r.clean_thresholds.count(ResidualKind::ARR)) {
        const Vector& a = r.clean_thresholds.at(ResidualKind::ARR).J_th;
        for (auto k : {ResidualKind::EARR, ResidualKind::IEARR}) {
            if (!r.clean_thresholds.count(k)) continue;
            os << "ratio ARR/" << to_string(k) << ":";
            const Vector& b = r.clean_thresholds.at(k).J_th;
            for (Eigen::Index c = 0; c < a.size(); ++c) os << ' ' << fmt(a(c) / b(c));
            os << "\n";
        }
    }
    for (const auto& s : r.scenarios) {
        os << "scenario " << s.spec.id << " (fault " << mp::to_string(s.spec.fault) << (s.spec.noise_on ? ", noise" : "")
           << "):\n";
        for (const auto& [k, fr] : s.families) {
            os << "  " << to_string(k) << ": alarm=" << (fr.detection.alarm ? "yes" : "no");
            if (auto t = fr.detection.first_alarm_time()) os << " first=" << fmt(*t) << "s";
            if (fr.delay) os << " delay=" << fmt(*fr.delay) << "s";
            os << " peak J/J_th=" << fmt(fr.detection.max_peak_ratio()) << "\n";
        }
    }
    if (!r.checks.empty()) {
        os << "checks:\n";
        for (const auto& c : r.checks) os << "  [" << (c.pass ? "PASS" : "FAIL") << "] " << c.name << ": " << c.detail << "\n";
    }
    return os.str();
}

inline void write_summary_csv(std::ostream& os, const Result& r) {
    os << "scenario,family,alarm,first_crossing_t,delay_s,peak_ratio";
    const Eigen::Index ch = r.clean_thresholds.begin()->second.J_th.size();
    for (Eigen::Index c = 1; c <= ch; ++c) os << ",Jth" << c;
    os << '\n';
    char buf[48];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const auto& s : r.scenarios) {
        for (const auto& [k, fr] : s.families) {
            os << s.spec.id << ',' << to_string(k) << ',' << (fr.detection.alarm ? 1 : 0) << ',';
            if (auto t = fr.detection.first_alarm_time()) os << num(*t);
            os << ',';
            if (fr.delay) os << num(*fr.delay);
            os << ',' << num(fr.detection.max_peak_ratio());
            const auto& th = r.thresholds_for(s.spec, k);
            for (Eigen::Index c = 0; c < th.J_th.size(); ++c) os << ',' << num(th.J_th(c));
            os << '\n';
        }
    }
}

/// One directory per scenario plus summary.csv, checks.csv and report.txt at the top.
inline void write_bundle(const std::filesystem::path& dir, const Result& r, Eigen::Index stride = 1) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto open = [](const fs::path& p) {
        std::ofstream f(p);
        if (!f) throw std::runtime_error("cannot write " + p.string());
        return f;
    };
    for (const auto& s : r.scenarios) {
        const fs::path sd = dir / ("scenario_" + std::to_string(s.spec.id));
        fs::create_directories(sd);
        {
            auto f = open(sd / "sim.csv");
            write_sim_csv(f, s.sim);
        }
        std::ostringstream rep;
        rep << "scenario " << s.spec.id << "\nfault " << mp::to_string(s.spec.fault) << "\nnoise "
            << (s.spec.noise_on ? "on" : "off") << "\nseed " << s.spec.seed << "\n";
        for (const auto& [k, fr] : s.families) {
            const std::string tag = family_tag(k);
            const auto& th = r.thresholds_for(s.spec, k);
            {
                auto f = open(sd / ("residuals_" + tag + ".csv"));
                write_residual_csv(f, fr.residual, stride);
            }
            {
                auto f = open(sd / ("evaluation_" + tag + ".csv"));
                write_evaluation_csv(f, fr.evaluation, th, stride);
            }
            rep << to_string(k) << " thresholds";
            for (Eigen::Index c = 0; c < th.J_th.size(); ++c) rep << ' ' << detail::fmt(th.J_th(c), "%.10g");
            rep << "\n" << to_string(k) << " alarm " << (fr.detection.alarm ? "yes" : "no") << "\n";
            for (std::size_t c = 0; c < fr.detection.channels.size(); ++c) {
                const auto& cd = fr.detection.channels[c];
                rep << to_string(k) << " channel " << c + 1 << " first_crossing "
                    << (cd.first_crossing_time ? detail::fmt(*cd.first_crossing_time, "%.10g") : std::string("none"))
                    << " peak_ratio " << detail::fmt(cd.peak_ratio, "%.10g") << "\n";
            }
            if (fr.delay) rep << to_string(k) << " delay " << detail::fmt(*fr.delay, "%.10g") << "\n";
        }
        auto f = open(sd / "report.txt");
        f << rep.str();
    }
    {
        auto f = open(dir / "summary.csv");
        write_summary_csv(f, r);
    }
    {
        auto f = open(dir / "checks.csv");
        f << "check,pass,detail\n";
        for (const auto& c : r.checks) f << c.name << ',' << (c.pass ? 1 : 0) << ",\"" << c.detail << "\"\n";
    }
    auto f = open(dir / "report.txt");
    f << report_summary(r);
}

}  // namespace lipfd::bench
