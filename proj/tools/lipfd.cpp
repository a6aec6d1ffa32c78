// lipfd: observer synthesis, scenario simulation and residual-based fault detection
// for Lipschitz plants. Exit codes: 0 ok, 1 config/usage, 2 infeasible, 3 numerical
// failure, 4 bench checks failed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lipfd/bench.hpp"
#include "lipfd/config.hpp"
#include "lipfd/manipulator.hpp"
#include "lipfd/model_io.hpp"
#include "lipfd/residuals.hpp"
#include "lipfd/simulator.hpp"
#include "lipfd/synthesis.hpp"

namespace fs = std::filesystem;
using namespace lipfd;
namespace mp = lipfd::manipulator;

namespace {

enum Exit { ok = 0, config_error = 1, infeasible = 2, numerical = 3, checks_failed = 4 };

struct Overrides {
    std::string config_path;
    std::string preset;
    std::string residual;
    std::string out;
    std::string form;
    std::string design_path;
    std::string thresholds_path;
    int scenario = 0;
    long long seed = -1;
    double duration = 0.0;
    double dt = 0.0;
    bool dump_lmi = false;
};

config::RunConfig resolve(const Overrides& ov) {
    config::RunConfig c = ov.config_path.empty() ? config::RunConfig{} : config::load(ov.config_path);
    if (!ov.preset.empty()) c.preset = ov.preset;
    if (!ov.out.empty()) c.output = ov.out;
    if (!ov.form.empty()) c.form = ov.form;
    if (ov.scenario) {
        c.scenario = ov.scenario;
        c.scenarios = {ov.scenario};
    }
    if (ov.seed >= 0) c.seed = static_cast<std::uint64_t>(ov.seed);
    if (ov.duration > 0.0) c.duration = ov.duration;
    if (ov.dt > 0.0) c.dt = ov.dt;
    if (!ov.residual.empty()) {
        if (ov.residual == "all") c.residuals = {"arr", "earr", "iearr"};
        else c.residuals = {ov.residual};
    }
    config::validate(c);
    return c;
}

LipschitzPlant load_plant(const config::RunConfig& c) {
    if (c.model_file) return io::plant_from_json(io::read_json_file(*c.model_file));
    return mp::build_plant(mp::Params{}, mp::parse_preset(c.preset));
}

void write_manifest(const config::RunConfig& c, const std::string& command) {
    fs::create_directories(c.output);
    io::write_json_file((fs::path(c.output) / "manifest.json").string(), config::manifest(c, command));
}

int status_exit(sdp::Status s) {
    if (s == sdp::Status::infeasible) return infeasible;
    return numerical;
}

void print_design(const ObserverDesign& d) {
    std::printf("status: %s\n", sdp::to_string(d.solver_status).c_str());
    if (!d.usable()) {
        if (!d.solver_message.empty()) std::printf("solver: %s\n", d.solver_message.c_str());
        return;
    }
    std::printf("mu = %.6g\ngamma = %.6g\nepsilon = %.6g\n", d.mu, d.gamma, d.epsilon);
    std::printf("L =\n");
    for (Eigen::Index i = 0; i < d.L.rows(); ++i) {
        for (Eigen::Index j = 0; j < d.L.cols(); ++j) std::printf(" %14.6g", d.L(i, j));
        std::printf("\n");
    }
    const auto& c = d.certificates;
    std::printf("lmi_max_eig = %.6g\npreschur_max_eig = %.6g\nclosedloop_spectral_abscissa = %.6g\n"
                "decay_max_eig = %.6g\nprojection_max_eig = %.6g\n",
                c.lmi_max_eig, c.preschur_max_eig, c.closedloop_spectral_abscissa, c.decay_max_eig,
                c.projection_max_eig);
    std::printf("certificates: %s\n", c.pass ? "PASS" : "FAIL");
}

ObserverDesign design_for(const config::RunConfig& c, const LipschitzPlant& plant, const std::string& design_path) {
    if (!design_path.empty()) return io::design_from_json(io::read_json_file(design_path));
    auto o = config::bench_options(c);
    ObserverDesign d = bench::synthesize(plant, o);
    if (!d.usable()) throw bench::DesignUnavailable("observer synthesis failed: " + sdp::to_string(d.solver_status), d.solver_status);
    return d;
}

int cmd_synth(const Overrides& ov) {
    const auto c = resolve(ov);
    const LipschitzPlant plant = load_plant(c);
    SynthesisProblem sp = SynthesisProblem::from_plant(plant, c.beta, c.lambda);
    if (c.delta) sp.delta = *c.delta;
    SynthesisOptions so;
    so.form = parse_lmi_form(c.form);
    so.objective_weight = c.objective_weight;

    write_manifest(c, "synth");
    if (ov.dump_lmi) {
        std::ofstream f(fs::path(c.output) / "lmi.txt");
        assemble_lmi(sp, so.form).write_triplets(f);
    }
    const ObserverDesign d = solve_design(sp, so);
    print_design(d);
    if (!d.usable()) return status_exit(d.solver_status);
    io::write_json_file((fs::path(c.output) / "design.json").string(), io::to_json(d));
    std::printf("lipschitz bound %.6g %s gamma\n", plant.phi.declared_lipschitz_bound,
                plant.phi.declared_lipschitz_bound <= d.gamma ? "<=" : ">");
    return d.certificates.pass ? ok : numerical;
}

int cmd_simulate(const Overrides& ov) {
    const auto c = resolve(ov);
    const LipschitzPlant plant = load_plant(c);
    const ObserverDesign d = design_for(c, plant, ov.design_path);
    write_manifest(c, "simulate");
    mp::ScenarioSpec s = config::scenario_template(c);
    const mp::ScenarioSpec preset = mp::ScenarioSpec::preset(c.scenario, c.seed);
    s.id = preset.id;
    s.fault = preset.fault;
    s.noise_on = preset.noise_on;
    s.seed = c.seed;
    Vector reference;
    if (s.noise_on) {
        mp::ScenarioSpec clean = s;
        clean.id = 1;
        clean.fault = mp::FaultKind::none;
        clean.noise_on = false;
        reference = mp::amplitude_reference(mp::simulate(plant, d.L, clean));
    }
    const SimOutput sim = mp::simulate(plant, d.L, s, reference);
    std::ofstream f(fs::path(c.output) / "sim.csv");
    write_sim_csv(f, sim);
    std::printf("scenario %d: %lld samples written to %s\n", s.id, static_cast<long long>(sim.grid.samples()),
                (fs::path(c.output) / "sim.csv").string().c_str());
    return ok;
}

io::json thresholds_json(const bench::Result& r) {
    io::json j;
    for (const auto& [k, th] : r.clean_thresholds) j["clean"][to_string(k)] = io::to_json(th);
    for (const auto& [k, th] : r.noisy_thresholds) j["noisy"][to_string(k)] = io::to_json(th);
    j["noise_reference"] = io::to_json(r.noise_reference);
    j["gamma"] = r.design.gamma;
    return j;
}

int cmd_calibrate(const Overrides& ov) {
    auto c = resolve(ov);
    c.scenarios = {1, 4};
    const auto plant = load_plant(c);
    auto o = config::bench_options(c);
    o.scenarios = {1, 4};
    const auto r = bench::run(o, ov.design_path.empty() ? std::nullopt : std::optional(design_for(c, plant, ov.design_path)));
    write_manifest(c, "calibrate");
    io::write_json_file((fs::path(c.output) / "thresholds.json").string(), thresholds_json(r));
    for (const auto& [k, th] : r.clean_thresholds) {
        std::printf("%s clean:", to_string(k).c_str());
        for (Eigen::Index i = 0; i < th.J_th.size(); ++i) std::printf(" %.6g", th.J_th(i));
        std::printf("\n");
    }
    for (const auto& [k, th] : r.noisy_thresholds) {
        std::printf("%s noisy:", to_string(k).c_str());
        for (Eigen::Index i = 0; i < th.J_th.size(); ++i) std::printf(" %.6g", th.J_th(i));
        std::printf("\n");
    }
    return ok;
}

int cmd_detect(const Overrides& ov) {
    auto c = resolve(ov);
    const auto plant = load_plant(c);
    auto o = config::bench_options(c);
    const int id = c.scenario;
    write_manifest(c, "detect");
    if (ov.thresholds_path.empty()) {
        o.scenarios = id == 1 ? std::vector<int>{1} : std::vector<int>{1, id};
        std::optional<ObserverDesign> d;
        if (!ov.design_path.empty()) d = design_for(c, plant, ov.design_path);
        const auto r = bench::run(o, d);
        const auto* s = r.scenario(id);
        bool alarm = false;
        for (const auto& [k, fr] : s->families) {
            alarm = alarm || fr.detection.alarm;
            std::printf("%s: alarm=%s", to_string(k).c_str(), fr.detection.alarm ? "yes" : "no");
            if (auto t = fr.detection.first_alarm_time()) std::printf(" first=%.6g s", *t);
            std::printf(" peak J/J_th=%.6g\n", fr.detection.max_peak_ratio());
        }
        std::printf("alarm: %s\n", alarm ? "yes" : "no");
        return ok;
    }
    // thresholds from a calibrate run
    const io::json tj = io::read_json_file(ov.thresholds_path);
    const ObserverDesign d = design_for(c, plant, ov.design_path);
    const auto rs = mp::build_residual_structure(mp::Params{}, d.gamma);
    mp::ScenarioSpec s = bench::scenario_from(o, id, c.seed);
    Vector reference;
    if (s.noise_on) {
        if (!tj.contains("noise_reference")) throw io::FormatError("thresholds file has no noise_reference");
        reference = io::vector_from_json(tj.at("noise_reference"), "noise_reference");
    }
    const SimOutput sim = mp::simulate(plant, d.L, s, reference);
    const char* section = s.noise_on ? "noisy" : "clean";
    bool alarm = false;
    for (auto k : o.families) {
        if (!tj.contains(section) || !tj.at(section).contains(to_string(k))) {
            throw io::FormatError(std::string("thresholds file lacks ") + section + "." + to_string(k));
        }
        const ThresholdSet th = io::thresholds_from_json(tj.at(section).at(to_string(k)));
        const auto ev = eval_window_norm(mp::compute_residual(k, rs, sim), s.window_t0, s.window_len);
        const auto rep = detect(ev, th);
        alarm = alarm || rep.alarm;
        std::printf("%s: alarm=%s", to_string(k).c_str(), rep.alarm ? "yes" : "no");
        if (auto t = rep.first_alarm_time()) std::printf(" first=%.6g s", *t);
        std::printf(" peak J/J_th=%.6g\n", rep.max_peak_ratio());
    }
    std::printf("alarm: %s\n", alarm ? "yes" : "no");
    return ok;
}

int cmd_bench(const Overrides& ov) {
    const auto c = resolve(ov);
    const auto plant = load_plant(c);
    std::optional<ObserverDesign> d;
    if (!ov.design_path.empty()) d = design_for(c, plant, ov.design_path);
    const auto r = bench::run(config::bench_options(c), d);
    write_manifest(c, "bench");
    bench::write_bundle(c.output, r);
    io::write_json_file((fs::path(c.output) / "design.json").string(), io::to_json(r.design));
    io::write_json_file((fs::path(c.output) / "thresholds.json").string(), thresholds_json(r));
    std::fputs(bench::report_summary(r).c_str(), stdout);
    return r.all_pass() ? ok : checks_failed;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

/// Long-format (t, series, value) rows from one wide CSV, keeping every `stride`-th row.
void append_long(std::ostream& os, const fs::path& wide, const std::string& family, long stride) {
    std::ifstream in(wide);
    if (!in) throw io::FormatError("missing " + wide.string());
    std::string line;
    std::getline(in, line);
    const auto header = split(line);
    std::vector<std::string> names;
    for (std::size_t i = 1; i < header.size(); ++i) {
        const std::string& h = header[i];
        std::string base = h, idx;
        while (!base.empty() && std::isdigit(static_cast<unsigned char>(base.back()))) {
            idx.insert(idx.begin(), base.back());
            base.pop_back();
        }
        if (h == "alarm") names.push_back("alarm_" + family);
        else names.push_back(base + "_" + family + "_" + idx);
    }
    long row = 0;
    while (std::getline(in, line)) {
        if (row++ % stride != 0) continue;
        const auto cells = split(line);
        for (std::size_t i = 1; i < cells.size() && i <= names.size(); ++i) {
            os << cells[0] << ',' << names[i - 1] << ',' << cells[i] << '\n';
        }
    }
}

int cmd_export(const std::string& bundle, const std::string& out_dir, long stride) {
    if (stride < 1) throw config::ConfigError("config: downsample must be >= 1");
    const fs::path root(bundle);
    if (!fs::is_directory(root)) throw io::FormatError("missing bundle directory " + root.string());
    if (!fs::exists(root / "summary.csv")) throw io::FormatError("missing " + (root / "summary.csv").string());
    const fs::path out = out_dir.empty() ? root / "plotdata" : fs::path(out_dir);
    fs::create_directories(out);
    std::vector<fs::path> scenarios;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory() && e.path().filename().string().rfind("scenario_", 0) == 0) scenarios.push_back(e.path());
    }
    std::sort(scenarios.begin(), scenarios.end());
    if (scenarios.empty()) throw io::FormatError("missing scenario_<id> directories in " + root.string());
    for (const auto& sd : scenarios) {
        std::ofstream res(out / (sd.filename().string() + "_residuals.csv"));
        std::ofstream eva(out / (sd.filename().string() + "_evaluation.csv"));
        res << "t,series,value\n";
        eva << "t,series,value\n";
        int found = 0;
        for (const char* fam : {"arr", "earr", "iearr"}) {
            const fs::path r = sd / (std::string("residuals_") + fam + ".csv");
            const fs::path e = sd / (std::string("evaluation_") + fam + ".csv");
            if (!fs::exists(r) && !fs::exists(e)) continue;
            std::string tag = fam;
            std::transform(tag.begin(), tag.end(), tag.begin(), [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
            append_long(res, r, tag, stride);
            append_long(eva, e, tag, stride);
            ++found;
        }
        if (!found) throw io::FormatError("missing residual files in " + sd.string());
    }
    std::printf("plot data written to %s\n", out.string().c_str());
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Observer-based fault detection for Lipschitz systems"};
    app.require_subcommand(1);
    Overrides ov;
    std::string bundle, plot_out;
    long downsample = 10;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", ov.config_path, "run configuration (JSON)");
        sub->add_option("--preset", ov.preset, "manipulator preset")->check(CLI::IsMember({"symbolic", "paper-literal"}));
        sub->add_option("--seed", ov.seed, "noise seed");
        sub->add_option("--out", ov.out, "output directory");
        sub->add_option("--form", ov.form, "LMI form")->check(CLI::IsMember({"printed", "dilated"}));
        sub->add_option("--duration", ov.duration, "run length in seconds");
        sub->add_option("--dt", ov.dt, "integration step in seconds");
    };
    auto scenario_opts = [&](CLI::App* sub) {
        sub->add_option("--scenario", ov.scenario, "scenario id")->check(CLI::Range(1, 5));
        sub->add_option("--residual", ov.residual, "residual family")->check(CLI::IsMember({"arr", "earr", "iearr", "all"}));
        sub->add_option("--design", ov.design_path, "design file from synth");
    };

    auto* synth = app.add_subcommand("synth", "solve the observer LMI and verify certificates");
    common(synth);
    synth->add_flag("--dump-lmi", ov.dump_lmi, "write the assembled LMI as sparse triplets");
    auto* simulate = app.add_subcommand("simulate", "simulate plant and observer for one scenario");
    common(simulate);
    scenario_opts(simulate);
    auto* calibrate = app.add_subcommand("calibrate", "fault-free threshold calibration");
    common(calibrate);
    scenario_opts(calibrate);
    auto* detect_cmd = app.add_subcommand("detect", "run one scenario against calibrated thresholds");
    common(detect_cmd);
    scenario_opts(detect_cmd);
    detect_cmd->add_option("--thresholds", ov.thresholds_path, "thresholds file from calibrate");
    auto* bench_cmd = app.add_subcommand("bench", "run the scenario suite and write a bundle");
    common(bench_cmd);
    scenario_opts(bench_cmd);
    auto* plot = app.add_subcommand("export-plotdata", "long-format plot data from a bench bundle");
    plot->add_option("bundle", bundle, "bundle directory")->required();
    plot->add_option("--out", plot_out, "output directory (default <bundle>/plotdata)");
    plot->add_option("--downsample", downsample, "keep every k-th row");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        if (*synth) return cmd_synth(ov);
        if (*simulate) return cmd_simulate(ov);
        if (*calibrate) return cmd_calibrate(ov);
        if (*detect_cmd) return cmd_detect(ov);
        if (*bench_cmd) return cmd_bench(ov);
        if (*plot) return cmd_export(bundle, plot_out, downsample);
    } catch (const config::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return config_error;
    } catch (const bench::DesignUnavailable& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return status_exit(e.status());
    } catch (const SimulationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return numerical;
    } catch (const io::FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return config_error;
    } catch (const ContractViolation& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return config_error;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return numerical;
    }
    return ok;
}
