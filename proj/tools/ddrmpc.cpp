// Command-line front end: collect, attack-check, run, sweep, compare.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "ddrmpc/ddrmpc.hpp"

using namespace ddrmpc;
namespace fs = std::filesystem;

namespace {

/// Flags mirroring ExperimentConfig; only flags given on the command line override the file.
struct ConfigFlags {
    std::string config_file;
    std::string model, pe_policy, controller, attack_mode, attack_file, output;
    double dt = 0, lambda_g = 0, lambda_h = 0, u_max = 0, v_bar = 0, ratio = 0, kappa_d = 0, blowup = 0;
    double kappa_f = 0, nu_f = 0, nu_d = 0, r1 = 0, r2 = 0, onset = 0, mean_burst = 0;
    int N = 0, L = 0, eta = 0, T_sim = 0;
    std::uint64_t seed_data = 0, seed_noise = 0, seed_attack = 0;
    std::vector<double> x0;
    bool dump = false;

    std::vector<std::pair<CLI::Option*, std::function<void(ExperimentConfig&)>>> setters;

    template <class T>
    void add(CLI::App* app, const std::string& name, T& target, const std::string& help,
             std::function<void(ExperimentConfig&)> apply)
    {
        setters.emplace_back(app->add_option(name, target, help), std::move(apply));
    }

    void attach(CLI::App* app)
    {
        app->add_option("-c,--config", config_file, "JSON experiment config")->check(CLI::ExistingFile);
        add(app, "--model", model, "batch-reactor or a model JSON file", [this](auto& c) { c.model = model; });
        add(app, "--dt", dt, "sampling period", [this](auto& c) { c.dt = dt; });
        add(app, "-N,--N", N, "offline data length", [this](auto& c) { c.N = N; });
        add(app, "--pe-policy", pe_policy, "full or depth", [this](auto& c) { c.pe_policy = pe_policy; });
        add(app, "-L,--L", L, "prediction horizon", [this](auto& c) { c.mpc.L = L; });
        add(app, "--eta", eta, "initialization window (0: observability index)", [this](auto& c) { c.mpc.eta = eta; });
        add(app, "--lambda-g", lambda_g, "g penalty", [this](auto& c) { c.mpc.lambda_g = lambda_g; });
        add(app, "--lambda-h", lambda_h, "h penalty", [this](auto& c) { c.mpc.lambda_h = lambda_h; });
        add(app, "--r1", r1, "input weight R1 = r1 * I", [this](auto& c) {
            c.mpc.R1 = r1 * Matrix::Identity(c.mpc.R1.rows(), c.mpc.R1.cols());
        });
        add(app, "--r2", r2, "output weight R2 = r2 * I", [this](auto& c) {
            c.mpc.R2 = r2 * Matrix::Identity(c.mpc.R2.rows(), c.mpc.R2.cols());
        });
        add(app, "--u-max", u_max, "input bound", [this](auto& c) { c.mpc.u_max = u_max; });
        add(app, "--v-bar", v_bar, "noise bound", [this](auto& c) { c.v_bar = v_bar; });
        add(app, "-T,--T-sim", T_sim, "closed-loop steps", [this](auto& c) { c.T_sim = T_sim; });
        add(app, "--x0", x0, "initial state", [this](auto& c) {
            c.x0 = Eigen::Map<const Vector>(x0.data(), static_cast<Eigen::Index>(x0.size()));
        });
        add(app, "--controller", controller, "data-driven, data-driven-periodic, model-based or open-loop",
            [this](auto& c) { c.controller = parse_controller(controller); });
        add(app, "--attack", attack_mode, "none, random, worst-case or file",
            [this](auto& c) { c.attack.mode = attack_mode; });
        add(app, "--ratio", ratio, "attack ratio 1/nu_f + 1/nu_d", [this](auto& c) { c.attack.ratio = ratio; });
        add(app, "--kappa-d", kappa_d, "duration chatter bound", [this](auto& c) {
            c.attack.kappa_d = kappa_d;
            c.attack.params.kappa_d = kappa_d;
        });
        add(app, "--kappa-f", kappa_f, "frequency chatter bound (explicit parameters)", [this](auto& c) {
            c.attack.ratio.reset();
            c.attack.params.kappa_f = kappa_f;
        });
        add(app, "--nu-f", nu_f, "average dwell time (explicit parameters)", [this](auto& c) {
            c.attack.ratio.reset();
            c.attack.params.nu_f = nu_f;
        });
        add(app, "--nu-d", nu_d, "duration ratio (explicit parameters)", [this](auto& c) {
            c.attack.ratio.reset();
            c.attack.params.nu_d = nu_d;
        });
        add(app, "--onset-probability", onset, "random generator burst onset probability",
            [this](auto& c) { c.attack.random.onset_probability = onset; });
        add(app, "--mean-burst", mean_burst, "random generator mean burst length",
            [this](auto& c) { c.attack.random.mean_burst = mean_burst; });
        add(app, "--attack-file", attack_file, "0/1 schedule file", [this](auto& c) {
            c.attack.file = attack_file;
            c.attack.mode = "file";
        });
        add(app, "--seed-data", seed_data, "offline data seed", [this](auto& c) { c.seeds.data = seed_data; });
        add(app, "--seed-noise", seed_noise, "closed-loop noise seed", [this](auto& c) { c.seeds.noise = seed_noise; });
        add(app, "--seed-attack", seed_attack, "attack seed", [this](auto& c) { c.seeds.attack = seed_attack; });
        add(app, "-o,--output", output, "output directory", [this](auto& c) { c.output_dir = output; });
        add(app, "--blowup", blowup, "divergence guard on ||y||", [this](auto& c) { c.blowup = blowup; });
        auto* f = app->add_flag("--dump-solutions", dump, "write every MPC solution");
        setters.emplace_back(f, [this](auto& c) { c.dump_solutions = dump; });
    }

    ExperimentConfig build() const
    {
        ExperimentConfig c = config_file.empty() ? ExperimentConfig{} : config_from_json(io::load_json(config_file));
        for (const auto& [opt, apply] : setters)
            if (opt->count() > 0) apply(c);
        return c;
    }
};

void print_summary(const RunRecord& r)
{
    std::printf("%s: %s, %ld steps, tail %.3e, peak %.3e, attack ratio %.4f, max gap %ld, solves %ld\n",
                r.controller.c_str(), r.summary.status.c_str(), r.summary.steps, r.summary.iss.tail_norm,
                r.summary.iss.peak_norm, r.summary.attack_ratio, r.summary.max_gap, r.summary.solves);
}

std::vector<double> parse_values(const std::string& text)
{
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            v.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("not a number: '" + item + "'");
        }
    }
    if (v.empty()) throw ConfigError("--values is empty");
    return v;
}

int cmd_collect(const ConfigFlags& flags)
{
    const ExperimentConfig c = flags.build();
    const Scenario s = resolve(c);
    const Trajectory tr = collect_for(s);
    const fs::path dir = c.output_dir.empty() ? fs::path(".") : fs::path(c.output_dir);
    io::write_file(dir / "offline.csv", io::trajectory_csv(tr));
    io::json side = io::trajectory_sidecar(tr);
    side["pe_policy"] = c.pe_policy;
    side["pe_order_required"] = s.pe_order;
    side["model"] = io::model_to_json(s.model);
    io::write_file(dir / "offline.json", side.dump(2) + "\n");
    std::printf("collected %zu samples, PE order %d: rank %ld of %ld, margin %.3e\n", tr.size(), s.pe_order,
                static_cast<long>(tr.pe->rank), static_cast<long>(tr.pe->required_rank), tr.pe->margin);
    return 0;
}

int cmd_attack_check(const ConfigFlags& flags, const std::string& check_file)
{
    ExperimentConfig c = flags.build();
    if (!check_file.empty()) {
        c.attack.mode = "file";
        c.attack.file = check_file;
    }
    AttackParams params = c.attack.resolved();
    DosSchedule s;
    if (c.attack.mode == "file") {
        s = io::load_schedule(c.attack.file);
        // parameters from the sidecar win when it exists
        if (fs::exists(fs::path(c.attack.file).replace_extension(".json"))) params = s.params;
        s.params = params;
    } else if (c.attack.mode == "random") {
        s = generate_random(params, c.T_sim, c.seeds.attack, c.attack.random);
    } else if (c.attack.mode == "worst-case") {
        s = generate_worst_case(params, c.T_sim);
    } else {
        s = no_attacks(c.T_sim, params);
    }
    params.validate();
    const ScheduleCheck chk = validate_schedule(s);
    std::printf("length %zu, attack ratio %.4f, max success gap %ld\n", s.size(), s.attack_ratio(),
                max_success_gap(s.indicators));
    std::printf("kappa_f %g nu_f %g kappa_d %g nu_d %g, 1/nu_f + 1/nu_d = %.6g\n", params.kappa_f, params.nu_f,
                params.kappa_d, params.nu_d, params.resilience_margin());
    if (params.resilience_margin() < 1.0) std::printf("inter-success bound %.6g\n", inter_success_bound(params));
    else std::printf("inter-success bound: none (1/nu_f + 1/nu_d >= 1)\n");
    if (!c.output_dir.empty()) io::save_schedule(s, fs::path(c.output_dir) / "schedule");
    if (!chk) {
        std::printf("INVALID: %s bound exceeded by %.6g on [%ld, %ld)\n", chk.bound.c_str(), chk.excess, chk.t1,
                    chk.t2);
        return 1;
    }
    std::printf("valid\n");
    return 0;
}

int cmd_run(const ConfigFlags& flags)
{
    const RunRecord r = run_experiment(flags.build());
    print_summary(r);
    return r.summary.status == "ok" ? 0 : 1;
}

int cmd_sweep(const ConfigFlags& flags, const std::string& axis, const std::string& values, int reps,
              unsigned threads)
{
    const ExperimentConfig tmpl = flags.build();
    const auto cells = sweep(tmpl, axis, parse_values(values), reps, threads);
    const std::string csv = sweep_csv(cells);
    if (!tmpl.output_dir.empty()) io::write_file(fs::path(tmpl.output_dir) / "sweep.csv", csv);
    std::cout << csv;
    int bad = 0;
    for (const auto& c : cells) bad += c.status != "ok";
    if (bad > 0) std::fprintf(stderr, "%d of %zu cells did not finish ok\n", bad, cells.size());
    return bad > 0 ? 1 : 0;
}

int cmd_compare(const ConfigFlags& flags)
{
    const Comparison c = compare(flags.build());
    print_summary(c.data_driven);
    print_summary(c.model_based);
    std::printf("tail difference (data-driven - model-based): %.3e\n", c.tail_delta);
    return c.data_driven.summary.status == "ok" && c.model_based.summary.status == "ok" ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Data-driven resilient MPC under denial-of-service attacks"};
    app.require_subcommand(1);

    ConfigFlags collect_flags, check_flags, run_flags, sweep_flags, compare_flags;
    auto* collect = app.add_subcommand("collect", "offline data to offline.csv and offline.json");
    collect_flags.attach(collect);

    auto* check = app.add_subcommand("attack-check", "generate or validate an attack schedule");
    check_flags.attach(check);
    std::string check_file;
    check->add_option("file", check_file, "schedule to validate (0/1 text)")->check(CLI::ExistingFile);

    auto* run = app.add_subcommand("run", "single closed-loop experiment");
    run_flags.attach(run);

    auto* sw = app.add_subcommand("sweep", "parameter sweep with repetitions");
    sweep_flags.attach(sw);
    std::string axis, values;
    int reps = 1;
    unsigned threads = 0;
    sw->add_option("--axis", axis, "N, L, ratio or v_bar")->required();
    sw->add_option("--values", values, "comma-separated values")->required();
    sw->add_option("--reps", reps, "repetitions per value")->check(CLI::PositiveNumber);
    sw->add_option("-j,--threads", threads, "worker threads (0: all cores)");

    auto* cmp = app.add_subcommand("compare", "data-driven against the model-based baseline");
    compare_flags.attach(cmp);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*collect) return cmd_collect(collect_flags);
        if (*check) return cmd_attack_check(check_flags, check_file);
        if (*run) return cmd_run(run_flags);
        if (*sw) return cmd_sweep(sweep_flags, axis, values, reps, threads);
        if (*cmp) return cmd_compare(compare_flags);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
