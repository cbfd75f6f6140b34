#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <future>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ddrmpc/common.hpp"
#include "ddrmpc/controller.hpp"
#include "ddrmpc/ddmpc.hpp"
#include "ddrmpc/dos.hpp"
#include "ddrmpc/hankel.hpp"
#include "ddrmpc/io.hpp"
#include "ddrmpc/lti.hpp"
#include "ddrmpc/random.hpp"

namespace ddrmpc {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum class ControllerKind { data_driven, data_driven_periodic, model_based, open_loop };

inline const char* to_string(ControllerKind k)
{
    switch (k) {
    case ControllerKind::data_driven: return "data-driven";
    case ControllerKind::data_driven_periodic: return "data-driven-periodic";
    case ControllerKind::model_based: return "model-based";
    case ControllerKind::open_loop: return "open-loop";
    }
    return "?";
}

inline ControllerKind parse_controller(const std::string& s)
{
    for (auto k : {ControllerKind::data_driven, ControllerKind::data_driven_periodic, ControllerKind::model_based,
                   ControllerKind::open_loop})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown controller '" + s + "'");
}

/// How the attack schedule of a run is obtained.
struct AttackSpec {
    std::string mode = "random";   ///< none | random | worst-case | file
    std::optional<double> ratio;   ///< 1/nu_f + 1/nu_d; overrides params when set
    double kappa_d = 3.0;          ///< used together with ratio
    AttackParams params;
    RandomAttackSettings random;
    std::string file;              ///< 0/1 text file for mode "file"

    AttackParams resolved() const { return ratio ? AttackParams::from_ratio(*ratio, kappa_d) : params; }
};

struct Seeds {
    std::uint64_t data = 7;
    std::uint64_t noise = 11;
    std::uint64_t attack = 13;
};

struct ExperimentConfig {
    std::string model = "batch-reactor"; ///< built-in name or path to a model JSON
    double dt = 0.1;
    int N = 100;
    std::string pe_policy = "full";      ///< full: order max(L+n_x+eta, L+2eta); depth: order L+eta
    MpcConfig mpc;                       ///< eta <= 0 takes the observability index
    AttackSpec attack;
    double v_bar = 1e-3;
    int T_sim = 200;
    Vector x0;                           ///< empty: default_initial_state
    ControllerKind controller = ControllerKind::data_driven;
    Seeds seeds;
    std::string output_dir;              ///< empty: nothing is written
    double blowup = 1e6;
    double gain_q = 1.0, gain_r = 1.0;   ///< baseline Riccati weights
    bool dump_solutions = false;

    ExperimentConfig()
    {
        mpc.eta = 0;
        mpc.R1 = 1e-4 * Matrix::Identity(2, 2);
        mpc.R2 = 3.0 * Matrix::Identity(2, 2);
        attack.ratio = 0.8841;
    }
};

/// Everything a run needs, derived from a validated config.
struct Scenario {
    ExperimentConfig config;
    SystemModel model;
    MpcConfig mpc;       ///< eta resolved, v_bar copied
    AttackParams params;
    int pe_order = 0;
    Vector x0;
};

/// Error raised inside the closed loop, tagged with the failing step.
class RunError : public Error {
public:
    RunError(long step, const std::string& what)
        : Error("step " + std::to_string(step) + ": " + what), step_(step)
    {
    }
    long step() const { return step_; }

private:
    long step_;
};

inline SystemModel load_model(const std::string& source, double dt)
{
    if (source == "batch-reactor") return batch_reactor(dt);
    return io::model_from_json(io::load_json(source));
}

/// Unit vector (0, 1, 0, 1, ...) / norm; (1) for a scalar state.
inline Vector default_initial_state(Eigen::Index nx)
{
    Vector x = Vector::Zero(nx);
    for (Eigen::Index i = 1; i < nx; i += 2) x(i) = 1.0;
    if (nx == 1) x(0) = 1.0;
    return nx > 0 ? Vector(x / x.norm()) : x;
}

/// Checks every precondition and reports all violations at once.
inline Scenario resolve(const ExperimentConfig& cfg)
{
    Scenario s;
    s.config = cfg;
    std::vector<std::string> errors;
    auto fail = [&](const std::string& e) { errors.push_back(e); };

    if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
    s.model = load_model(cfg.model, cfg.dt);
    const Eigen::Index nx = s.model.nx(), nu = s.model.nu(), ny = s.model.ny();

    int eta = cfg.mpc.eta;
    try {
        check_structure(s.model);
        const int index = observability_index(s.model);
        if (eta <= 0) eta = index;
        else if (eta < index)
            fail("observability: eta = " + std::to_string(eta) + " below the observability index " +
                 std::to_string(index));
    } catch (const StructuralError& e) {
        fail(std::string("structure: ") + e.what());
        if (eta <= 0) eta = 1;
    }

    s.mpc = cfg.mpc;
    s.mpc.eta = eta;
    s.mpc.v_bar = cfg.v_bar;
    if (s.mpc.R1.rows() != nu || s.mpc.R1.cols() != nu) fail("weights: R1 must be n_u x n_u");
    if (s.mpc.R2.rows() != ny || s.mpc.R2.cols() != ny) fail("weights: R2 must be n_y x n_y");
    try {
        s.mpc.validate(nx);
    } catch (const ConfigError& e) {
        fail(e.what());
    }

    if (cfg.pe_policy == "full") s.pe_order = required_pe_order(s.mpc.L, nx, eta);
    else if (cfg.pe_policy == "depth") s.pe_order = s.mpc.L + eta;
    else fail("pe_policy must be 'full' or 'depth'");
    if (s.pe_order > 0) {
        const long need = (nu + 1) * s.pe_order - 1;
        if (cfg.N < need)
            fail("excitation: N = " + std::to_string(cfg.N) + " too short for order " + std::to_string(s.pe_order) +
                 " (needs N >= " + std::to_string(need) + ")");
    }

    if (cfg.v_bar < 0.0 || !std::isfinite(cfg.v_bar)) fail("noise: v_bar must be finite and >= 0");
    if (cfg.T_sim < 1) fail("T_sim must be >= 1");
    if (!(cfg.blowup > 0.0)) fail("blowup must be positive");

    s.x0 = cfg.x0.size() == 0 ? default_initial_state(nx) : cfg.x0;
    if (s.x0.size() != nx) fail("x0 must have n_x entries");

    const auto& a = cfg.attack;
    if (a.mode != "none" && a.mode != "random" && a.mode != "worst-case" && a.mode != "file")
        fail("attack mode must be none, random, worst-case or file");
    try {
        s.params = a.resolved();
        s.params.validate();
        if (a.mode == "random" || a.mode == "worst-case") {
            if (s.params.resilience_margin() >= 1.0)
                fail("resilience: 1/nu_f + 1/nu_d = " + std::to_string(s.params.resilience_margin()) + " >= 1");
        }
    } catch (const PreconditionError& e) {
        fail(std::string("attack: ") + e.what());
    }
    if (a.mode == "file" && a.file.empty()) fail("attack mode file needs attack.file");
    if (cfg.controller == ControllerKind::data_driven_periodic && s.params.resilience_margin() < 1.0 &&
        s.params.resilience_margin() >= 1.0 - static_cast<double>(nx - 1) / s.params.nu_f)
        warn("periodic controller: 1/nu_f + 1/nu_d >= 1 - (n_x - 1)/nu_f");

    if (!errors.empty()) {
        std::string msg = "invalid experiment configuration:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return s;
}

inline DosSchedule make_schedule(const Scenario& s)
{
    const auto& a = s.config.attack;
    const long T = s.config.T_sim;
    if (a.mode == "none") return no_attacks(T, s.params);
    if (a.mode == "random") return generate_random(s.params, T, s.config.seeds.attack, a.random);
    if (a.mode == "worst-case") return generate_worst_case(s.params, T);
    DosSchedule d = io::load_schedule(a.file);
    if (static_cast<long>(d.size()) < T)
        throw ConfigError("attack file holds " + std::to_string(d.size()) + " steps, T_sim = " + std::to_string(T));
    d.indicators.resize(static_cast<std::size_t>(T));
    d.params = s.params;
    if (const auto chk = validate_schedule(d); !chk)
        warn("attack file violates the " + chk.bound + " bound on [" + std::to_string(chk.t1) + ", " +
             std::to_string(chk.t2) + ")");
    return d;
}

/// Offline record used by the data-driven controllers: x0 = 0, data seed, noise at v_bar.
inline Trajectory collect_for(const Scenario& s)
{
    CollectionSettings cs;
    cs.N = s.config.N;
    cs.pe_order = s.pe_order;
    cs.u_max = s.mpc.u_max;
    cs.v_bar = s.config.v_bar;
    cs.seed = s.config.seeds.data;
    return collect_offline(s.model, cs);
}

struct StepRecord {
    long t = 0;
    bool attacked = false;
    Vector u, y;
    std::optional<Vector> zeta; ///< present on delivered steps only
    double y_norm = 0.0;
    double cost = kNaN;         ///< optimal cost on solve steps
    int iterations = 0;
};

struct IssMetrics {
    double tail_norm = 0.0;
    double peak_norm = 0.0;
    double decay_fit = 0.0; ///< log-rate per step of the output envelope
};

struct RunSummary {
    std::string status;   ///< ok | diverged
    long steps = 0;
    IssMetrics iss;
    double attack_ratio = 0.0;
    long max_gap = 0;
    long solves = 0;
    double mean_cost = kNaN;
};

struct RunRecord {
    std::string controller;
    long T_sim = 0;
    double v_bar = 0.0;
    double blowup = 0.0;
    std::vector<StepRecord> steps;
    DosSchedule schedule;
    RunSummary summary;
    double wall_time = 0.0; ///< seconds; not part of the reproducible outputs
};

/// Tail and peak of the output norm, and the exponential rate of its envelope.
///
/// The tail is the final quarter of the record; the envelope e_t = max_{s >= t} ||y_s|| is
/// fitted on the steps before the tail where it exceeds v_bar.
inline IssMetrics iss_metrics(const std::vector<double>& norms, double v_bar)
{
    IssMetrics m;
    const auto T = static_cast<long>(norms.size());
    if (T == 0) return m;
    const long tail_start = T - T / 4;
    for (long t = 0; t < T; ++t) {
        m.peak_norm = std::max(m.peak_norm, norms[static_cast<std::size_t>(t)]);
        if (t >= tail_start) m.tail_norm = std::max(m.tail_norm, norms[static_cast<std::size_t>(t)]);
    }
    std::vector<double> env(norms.size());
    double run = 0.0;
    for (long t = T - 1; t >= 0; --t) {
        run = std::max(run, norms[static_cast<std::size_t>(t)]);
        env[static_cast<std::size_t>(t)] = run;
    }
    double n = 0, st = 0, sl = 0, stt = 0, stl = 0;
    for (long t = 0; t < tail_start; ++t) {
        const double e = env[static_cast<std::size_t>(t)];
        if (!(e > v_bar) || !(e > 0.0) || !std::isfinite(e)) continue;
        const double l = std::log(e);
        const double x = static_cast<double>(t);
        n += 1;
        st += x;
        sl += l;
        stt += x * x;
        stl += x * l;
    }
    const double den = n * stt - st * st;
    if (n >= 2 && den > 0.0) m.decay_fit = (n * stl - st * sl) / den;
    return m;
}

inline IssMetrics iss_metrics(const RunRecord& r, double v_bar)
{
    std::vector<double> norms;
    for (const auto& s : r.steps) norms.push_back(s.y_norm);
    return iss_metrics(norms, v_bar);
}

/// Summary as a pure function of the per-step table.
inline RunSummary summarize(const std::vector<StepRecord>& steps, double v_bar, double blowup)
{
    RunSummary s;
    s.steps = static_cast<long>(steps.size());
    std::vector<double> norms;
    Indicators ind;
    double cost_sum = 0.0;
    for (const auto& r : steps) {
        norms.push_back(r.y_norm);
        ind.push_back(r.attacked ? 1 : 0);
        if (!std::isnan(r.cost)) {
            ++s.solves;
            cost_sum += r.cost;
        }
    }
    s.iss = iss_metrics(norms, v_bar);
    s.attack_ratio = DosSchedule{ind, {}, {}}.attack_ratio();
    s.max_gap = max_success_gap(ind);
    if (s.solves > 0) s.mean_cost = cost_sum / static_cast<double>(s.solves);
    const bool blew = !steps.empty() && !(steps.back().y_norm < blowup);
    s.status = blew ? "diverged" : "ok";
    return s;
}

inline std::unique_ptr<Controller> make_controller(const Scenario& s, std::shared_ptr<const HankelPair> data)
{
    switch (s.config.controller) {
    case ControllerKind::data_driven: return std::make_unique<DataDrivenController>(std::move(data), s.mpc);
    case ControllerKind::data_driven_periodic:
        return std::make_unique<DataDrivenController>(std::move(data), s.mpc, static_cast<int>(s.model.nx()));
    case ControllerKind::model_based:
        return std::make_unique<ModelBasedController>(s.model, synthesize_gains(s.model, s.config.gain_q,
                                                                                 s.config.gain_r));
    case ControllerKind::open_loop: return std::make_unique<OpenLoopController>(s.model.nu());
    }
    throw ConfigError("unknown controller");
}

/// Optional observer of every solve, used for solution dumps.
using SolveHook = std::function<void(long t, const StepOutput&)>;

/// Closed loop of plant, channel and controller on a given schedule.
///
/// Per step: controller input, plant output, then w_t (n_x entries) and n_t (n_y entries)
/// from the noise generator in that order. A delivered packet at t carries
/// zeta_{t-eta} .. zeta_{t-1}. The run stops early once ||y_t|| reaches the blow-up guard.
inline RunRecord run_closed_loop(const Scenario& s, const DosSchedule& schedule, Controller& ctrl,
                                 const SolveHook& hook = {})
{
    const auto t0 = std::chrono::steady_clock::now();
    const SystemModel& m = s.model;
    const long T = s.config.T_sim;
    if (static_cast<long>(schedule.size()) < T) throw PreconditionError("run_closed_loop: schedule shorter than T_sim");

    RunRecord rec;
    rec.controller = ctrl.name();
    rec.T_sim = T;
    rec.v_bar = s.config.v_bar;
    rec.blowup = s.config.blowup;
    rec.schedule = schedule;
    rec.schedule.indicators.resize(static_cast<std::size_t>(T));

    Rng noise(s.config.seeds.noise);
    const int window = ctrl.window();
    Sequence zetas;
    Vector x = s.x0;
    for (long t = 0; t < T; ++t) {
        StepRecord row;
        row.t = t;
        row.attacked = schedule.attacked(static_cast<std::size_t>(t));
        Sequence packet;
        const Sequence* fresh = nullptr;
        if (!row.attacked && window > 0 && t >= window) {
            packet.assign(zetas.end() - window, zetas.end());
            fresh = &packet;
        }
        StepOutput out;
        try {
            out = ctrl.step(t, row.attacked, fresh);
        } catch (const Error& e) {
            throw RunError(t, e.what());
        }
        if (out.solved && hook) hook(t, out);
        row.u = out.u;
        row.y = m.C * x + m.D * out.u;
        const Vector w = noise.uniform_vector(m.nx(), s.config.v_bar);
        const Vector n = noise.uniform_vector(m.ny(), s.config.v_bar);
        const Vector zeta = row.y + n;
        zetas.push_back(zeta);
        ctrl.observe(out.u, zeta);
        if (!row.attacked) row.zeta = zeta;
        row.y_norm = row.y.norm();
        if (out.solved) {
            row.cost = out.cost;
            row.iterations = out.iterations;
        }
        rec.steps.push_back(std::move(row));
        if (!(rec.steps.back().y_norm < s.config.blowup)) break;
        x = m.A * x + m.B * out.u + w;
    }
    rec.summary = summarize(rec.steps, rec.v_bar, rec.blowup);
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

// ---------------------------------------------------------------------------
// Persistence

inline std::string run_csv(const RunRecord& r)
{
    if (r.steps.empty()) return "t,attack,y_norm,cost,iterations\n";
    const Eigen::Index nu = r.steps.front().u.size(), ny = r.steps.front().y.size();
    std::string out = "t,attack";
    for (Eigen::Index i = 0; i < nu; ++i) out += ",u_" + std::to_string(i);
    for (Eigen::Index i = 0; i < ny; ++i) out += ",y_" + std::to_string(i);
    for (Eigen::Index i = 0; i < ny; ++i) out += ",zeta_" + std::to_string(i);
    out += ",y_norm,cost,iterations\n";
    for (const auto& s : r.steps) {
        out += std::to_string(s.t) + (s.attacked ? ",1" : ",0");
        for (Eigen::Index i = 0; i < nu; ++i) out += "," + io::fmt(s.u(i));
        for (Eigen::Index i = 0; i < ny; ++i) out += "," + io::fmt(s.y(i));
        for (Eigen::Index i = 0; i < ny; ++i) out += "," + (s.zeta ? io::fmt((*s.zeta)(i)) : std::string());
        out += "," + io::fmt(s.y_norm) + "," + (std::isnan(s.cost) ? std::string() : io::fmt(s.cost)) + "," +
               std::to_string(s.iterations) + "\n";
    }
    return out;
}

/// Inverse of run_csv.
inline std::vector<StepRecord> parse_run_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("run csv: empty");
    auto split = [](const std::string& l) {
        std::vector<std::string> f;
        std::string cur;
        for (char ch : l) {
            if (ch == ',') {
                f.push_back(cur);
                cur.clear();
            } else if (ch != '\r') {
                cur.push_back(ch);
            }
        }
        f.push_back(cur);
        return f;
    };
    const auto header = split(line);
    Eigen::Index nu = 0, ny = 0;
    for (const auto& h : header) {
        if (h.rfind("u_", 0) == 0) ++nu;
        if (h.rfind("y_", 0) == 0 && h != "y_norm") ++ny;
    }
    const std::size_t expect = 2 + static_cast<std::size_t>(nu + 2 * ny) + 3;
    if (header.size() != expect) throw ConfigError("run csv: unexpected header");
    std::vector<StepRecord> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split(line);
        if (f.size() != expect) throw ConfigError("run csv: ragged row");
        StepRecord r;
        std::size_t k = 0;
        r.t = std::stol(f[k++]);
        r.attacked = f[k++] == "1";
        r.u.resize(nu);
        r.y.resize(ny);
        for (Eigen::Index i = 0; i < nu; ++i) r.u(i) = std::stod(f[k++]);
        for (Eigen::Index i = 0; i < ny; ++i) r.y(i) = std::stod(f[k++]);
        if (!f[k].empty()) {
            Vector z(ny);
            for (Eigen::Index i = 0; i < ny; ++i) z(i) = std::stod(f[k + static_cast<std::size_t>(i)]);
            r.zeta = z;
        }
        k += static_cast<std::size_t>(ny);
        r.y_norm = std::stod(f[k++]);
        r.cost = f[k].empty() ? kNaN : std::stod(f[k]);
        ++k;
        r.iterations = std::stoi(f[k]);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline io::json summary_to_json(const RunSummary& s)
{
    auto num = [](double v) { return std::isfinite(v) ? io::json(v) : io::json(nullptr); };
    return {{"status", s.status},
            {"steps", s.steps},
            {"tail_norm", num(s.iss.tail_norm)},
            {"peak_norm", num(s.iss.peak_norm)},
            {"decay_fit", num(s.iss.decay_fit)},
            {"attack_ratio", s.attack_ratio},
            {"max_gap", s.max_gap},
            {"solves", s.solves},
            {"mean_cost", num(s.mean_cost)}};
}

inline io::json config_to_json(const ExperimentConfig& c)
{
    io::json j;
    j["model"] = c.model;
    j["dt"] = c.dt;
    j["N"] = c.N;
    j["pe_policy"] = c.pe_policy;
    j["L"] = c.mpc.L;
    if (c.mpc.eta > 0) j["eta"] = c.mpc.eta;
    j["lambda_g"] = c.mpc.lambda_g;
    j["lambda_h"] = c.mpc.lambda_h;
    auto rows = [](const Matrix& m) {
        io::json a = io::json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            io::json r = io::json::array();
            for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
            a.push_back(r);
        }
        return a;
    };
    j["R1"] = rows(c.mpc.R1);
    j["R2"] = rows(c.mpc.R2);
    j["u_max"] = c.mpc.u_max;
    io::json a;
    a["mode"] = c.attack.mode;
    if (c.attack.ratio) {
        a["ratio"] = *c.attack.ratio;
        a["kappa_d"] = c.attack.kappa_d;
    } else {
        a["params"] = io::params_to_json(c.attack.params);
    }
    a["onset_probability"] = c.attack.random.onset_probability;
    a["mean_burst"] = c.attack.random.mean_burst;
    if (!c.attack.file.empty()) a["file"] = c.attack.file;
    j["attack"] = a;
    j["v_bar"] = c.v_bar;
    j["T_sim"] = c.T_sim;
    if (c.x0.size() > 0) j["x0"] = io::to_json(c.x0);
    j["controller"] = to_string(c.controller);
    j["seeds"] = {{"data", c.seeds.data}, {"noise", c.seeds.noise}, {"attack", c.seeds.attack}};
    if (!c.output_dir.empty()) j["output_dir"] = c.output_dir;
    j["blowup"] = c.blowup;
    j["gains"] = {{"q", c.gain_q}, {"r", c.gain_r}};
    j["dump_solutions"] = c.dump_solutions;
    return j;
}

/// Reads a config; absent keys keep their defaults.
inline ExperimentConfig config_from_json(const io::json& j)
{
    ExperimentConfig c;
    static const std::vector<std::string> known = {
        "model", "dt",    "N",     "pe_policy", "L",          "eta",    "lambda_g", "lambda_h", "R1",
        "R2",    "u_max", "attack", "v_bar",    "T_sim",      "x0",     "controller", "seeds",  "output_dir",
        "blowup", "gains", "dump_solutions"};
    try {
        for (auto it = j.begin(); it != j.end(); ++it)
            if (std::find(known.begin(), known.end(), it.key()) == known.end())
                throw ConfigError("unknown config key '" + it.key() + "'");
        c.model = j.value("model", c.model);
        c.dt = j.value("dt", c.dt);
        c.N = j.value("N", c.N);
        c.pe_policy = j.value("pe_policy", c.pe_policy);
        c.mpc.L = j.value("L", c.mpc.L);
        c.mpc.eta = j.value("eta", c.mpc.eta);
        c.mpc.lambda_g = j.value("lambda_g", c.mpc.lambda_g);
        c.mpc.lambda_h = j.value("lambda_h", c.mpc.lambda_h);
        c.mpc.u_max = j.value("u_max", c.mpc.u_max);
        auto weight = [](const io::json& w, const Matrix& current) -> Matrix {
            if (w.is_number()) return w.get<double>() * Matrix::Identity(current.rows(), current.cols());
            if (!w.is_array() || w.empty()) throw ConfigError("weights must be a number or an array of rows");
            Matrix m(static_cast<Eigen::Index>(w.size()), static_cast<Eigen::Index>(w[0].size()));
            for (std::size_t i = 0; i < w.size(); ++i) {
                if (w[i].size() != w[0].size()) throw ConfigError("weights: ragged rows");
                for (std::size_t k = 0; k < w[i].size(); ++k)
                    m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = w[i][k].get<double>();
            }
            return m;
        };
        if (j.contains("R1")) c.mpc.R1 = weight(j["R1"], c.mpc.R1);
        if (j.contains("R2")) c.mpc.R2 = weight(j["R2"], c.mpc.R2);
        if (j.contains("attack")) {
            const auto& a = j["attack"];
            c.attack.mode = a.value("mode", c.attack.mode);
            if (a.contains("params")) {
                c.attack.params = io::params_from_json(a["params"]);
                c.attack.ratio.reset();
            }
            if (a.contains("ratio")) c.attack.ratio = a["ratio"].get<double>();
            c.attack.kappa_d = a.value("kappa_d", c.attack.kappa_d);
            c.attack.random.onset_probability = a.value("onset_probability", c.attack.random.onset_probability);
            c.attack.random.mean_burst = a.value("mean_burst", c.attack.random.mean_burst);
            c.attack.file = a.value("file", c.attack.file);
        }
        c.v_bar = j.value("v_bar", c.v_bar);
        c.T_sim = j.value("T_sim", c.T_sim);
        if (j.contains("x0")) c.x0 = io::vector_from_json(j["x0"], "x0");
        if (j.contains("controller")) c.controller = parse_controller(j["controller"].get<std::string>());
        if (j.contains("seeds")) {
            const auto& s = j["seeds"];
            c.seeds.data = s.value("data", c.seeds.data);
            c.seeds.noise = s.value("noise", c.seeds.noise);
            c.seeds.attack = s.value("attack", c.seeds.attack);
        }
        c.output_dir = j.value("output_dir", c.output_dir);
        c.blowup = j.value("blowup", c.blowup);
        if (j.contains("gains")) {
            c.gain_q = j["gains"].value("q", c.gain_q);
            c.gain_r = j["gains"].value("r", c.gain_r);
        }
        c.dump_solutions = j.value("dump_solutions", c.dump_solutions);
    } catch (const io::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

inline io::json run_summary_json(const RunRecord& r, const Scenario& s)
{
    io::json j = summary_to_json(r.summary);
    j["controller"] = r.controller;
    j["T_sim"] = r.T_sim;
    j["v_bar"] = r.v_bar;
    j["blowup"] = r.blowup;
    j["pe_order"] = s.pe_order;
    j["eta"] = s.mpc.eta;
    j["schedule"] = io::schedule_sidecar(r.schedule);
    j["config"] = config_to_json(s.config);
    j["wall_time_s"] = r.wall_time;
    return j;
}

/// run.csv, summary.json and schedule.{txt,json} in dir.
inline void persist(const RunRecord& r, const Scenario& s, const std::filesystem::path& dir)
{
    io::write_file(dir / "run.csv", run_csv(r));
    io::write_file(dir / "summary.json", run_summary_json(r, s).dump(2) + "\n");
    io::save_schedule(r.schedule, dir / "schedule");
}

/// Full experiment: data, schedule, controller, closed loop, optional persistence.
inline RunRecord run_experiment(const ExperimentConfig& config)
{
    const Scenario s = resolve(config);
    std::shared_ptr<const HankelPair> data;
    if (config.controller == ControllerKind::data_driven || config.controller == ControllerKind::data_driven_periodic)
        data = std::make_shared<const HankelPair>(HankelPair::from(collect_for(s), s.mpc.L + s.mpc.eta));
    const DosSchedule schedule = make_schedule(s);
    auto ctrl = make_controller(s, data);

    SolveHook hook;
    if (config.dump_solutions && !config.output_dir.empty()) {
        const auto* dd = dynamic_cast<const DataDrivenController*>(ctrl.get());
        hook = [dd, dir = std::filesystem::path(config.output_dir)](long t, const StepOutput&) {
            if (dd == nullptr || !dd->state().cached) return;
            const MpcSolution& sol = *dd->state().cached;
            io::json j;
            j["t"] = t;
            j["cost"] = sol.cost;
            j["iterations"] = sol.qp.iterations;
            j["status"] = to_string(sol.qp.status);
            j["primal_residual"] = sol.qp.primal_residual;
            j["dual_residual"] = sol.qp.dual_residual;
            io::json u = io::json::array(), y = io::json::array();
            for (const auto& v : sol.u_pred) u.push_back(io::to_json(v));
            for (const auto& v : sol.y_pred) y.push_back(io::to_json(v));
            j["u_pred"] = u;
            j["y_pred"] = y;
            char name[32];
            std::snprintf(name, sizeof name, "step_%05ld.json", t);
            io::write_file(dir / "solutions" / name, j.dump(2) + "\n");
        };
    }
    RunRecord r = run_closed_loop(s, schedule, *ctrl, hook);
    if (!config.output_dir.empty()) persist(r, s, config.output_dir);
    return r;
}

// ---------------------------------------------------------------------------
// Sweeps and comparisons

struct SweepCell {
    std::string axis;
    double value = 0.0;
    int rep = 0;
    std::string status; ///< ok | diverged | error
    RunSummary summary;
    std::string error;
};

/// Config of one sweep cell; repetition 0 keeps the template seeds.
inline ExperimentConfig sweep_cell_config(const ExperimentConfig& tmpl, const std::string& axis, double value, int rep)
{
    ExperimentConfig c = tmpl;
    c.output_dir.clear();
    c.dump_solutions = false;
    if (axis == "N") c.N = static_cast<int>(std::lround(value));
    else if (axis == "L") c.mpc.L = static_cast<int>(std::lround(value));
    else if (axis == "ratio") {
        c.attack.ratio = value;
        if (c.attack.mode == "none" || c.attack.mode == "file") c.attack.mode = "random";
    } else if (axis == "v_bar") c.v_bar = value;
    else throw ConfigError("sweep axis must be N, L, ratio or v_bar");
    if (rep > 0) {
        const auto r = static_cast<std::uint64_t>(rep);
        c.seeds.data = derive_seed(tmpl.seeds.data, r);
        c.seeds.noise = derive_seed(tmpl.seeds.noise, r);
        c.seeds.attack = derive_seed(tmpl.seeds.attack, r);
    }
    return c;
}

/// Runs values x repetitions cells in parallel; failures are recorded per cell.
inline std::vector<SweepCell> sweep(const ExperimentConfig& tmpl, const std::string& axis,
                                    const std::vector<double>& values, int repetitions, unsigned threads = 0)
{
    if (repetitions < 1) throw ConfigError("sweep: repetitions must be >= 1");
    sweep_cell_config(tmpl, axis, values.empty() ? 0.0 : values.front(), 0);
    std::vector<SweepCell> cells;
    for (double v : values)
        for (int r = 0; r < repetitions; ++r) cells.push_back({axis, v, r, "", {}, ""});

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            SweepCell& cell = cells[i];
            try {
                const RunRecord rec = run_experiment(sweep_cell_config(tmpl, axis, cell.value, cell.rep));
                cell.summary = rec.summary;
                cell.status = rec.summary.status;
            } catch (const std::exception& e) {
                cell.status = "error";
                cell.error = e.what();
            }
        }
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(cells.size(), 1)));
    std::vector<std::future<void>> jobs;
    for (unsigned k = 0; k < threads; ++k) jobs.push_back(std::async(std::launch::async, worker));
    for (auto& j : jobs) j.get();
    return cells;
}

inline std::string sweep_csv(const std::vector<SweepCell>& cells)
{
    std::string out = "axis,value,rep,status,tail_norm,peak_norm,mean_cost,max_gap,attack_ratio,error\n";
    for (const auto& c : cells) {
        std::string err = c.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        const bool ran = c.status != "error";
        out += c.axis + "," + io::fmt(c.value) + "," + std::to_string(c.rep) + "," + c.status + "," +
               (ran ? io::fmt(c.summary.iss.tail_norm) : "") + "," + (ran ? io::fmt(c.summary.iss.peak_norm) : "") +
               "," + (ran && !std::isnan(c.summary.mean_cost) ? io::fmt(c.summary.mean_cost) : "") + "," +
               (ran ? std::to_string(c.summary.max_gap) : "") + "," + (ran ? io::fmt(c.summary.attack_ratio) : "") +
               "," + err + "\n";
    }
    return out;
}

struct Comparison {
    RunRecord data_driven;
    RunRecord model_based;
    double tail_delta = 0.0; ///< data-driven tail minus model-based tail
};

/// Data-driven and model-based runs sharing seeds, schedule and noise.
inline Comparison compare(const ExperimentConfig& config)
{
    ExperimentConfig dd = config, mb = config;
    if (dd.controller != ControllerKind::data_driven_periodic) dd.controller = ControllerKind::data_driven;
    mb.controller = ControllerKind::model_based;
    if (!config.output_dir.empty()) {
        dd.output_dir = (std::filesystem::path(config.output_dir) / to_string(dd.controller)).string();
        mb.output_dir = (std::filesystem::path(config.output_dir) / "model-based").string();
    }
    Comparison c;
    c.data_driven = run_experiment(dd);
    c.model_based = run_experiment(mb);
    c.tail_delta = c.data_driven.summary.iss.tail_norm - c.model_based.summary.iss.tail_norm;
    if (!config.output_dir.empty()) {
        io::json j;
        j["data_driven"] = summary_to_json(c.data_driven.summary);
        j["model_based"] = summary_to_json(c.model_based.summary);
        j["tail_delta"] = c.tail_delta;
        j["same_schedule"] = c.data_driven.schedule.indicators == c.model_based.schedule.indicators;
        io::write_file(std::filesystem::path(config.output_dir) / "compare.json", j.dump(2) + "\n");
    }
    return c;
}

} // namespace ddrmpc
