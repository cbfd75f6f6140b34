// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "ddrmpc/ddrmpc.hpp"
#include "support.hpp"

using namespace ddrmpc;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail)
{
    std::printf("%s  %2d  %-34s %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ExperimentConfig fixture()
{
    ExperimentConfig c;
    c.N = 100;
    c.mpc.L = 10;
    c.mpc.lambda_g = 0.1;
    c.mpc.lambda_h = 100.0;
    c.mpc.R1 = 1e-4 * Matrix::Identity(2, 2);
    c.mpc.R2 = 3.0 * Matrix::Identity(2, 2);
    c.T_sim = 200;
    c.attack.mode = "random";
    c.attack.ratio = 0.8841;
    c.v_bar = 1e-3;
    return c;
}

// ---------------------------------------------------------------------------

void fundamental_lemma()
{
    const auto t0 = Clock::now();
    const Trajectory data = ddrmpc::testing::fixture_data(0.0, 100, fixture().seeds.data);
    const SystemModel m = batch_reactor();
    Rng rng(1001);
    double worst_in = 0.0, worst_out = kInf;
    for (int k = 0; k < 50; ++k) {
        const Sequence u = ddrmpc::testing::random_sequence(rng, 12, 2, 1.0);
        const Sequence y = simulate(m, rng.uniform_vector(4, 1.0), u).outputs;
        worst_in = std::max(worst_in, fundamental_lemma_residual(data, u, y));
    }
    for (int k = 0; k < 50; ++k) {
        const Sequence u = ddrmpc::testing::random_sequence(rng, 12, 2, 1.0);
        Sequence y = simulate(m, rng.uniform_vector(4, 1.0), u).outputs;
        for (auto& v : y) v += rng.uniform_vector(2, 0.05);
        worst_out = std::min(worst_out, fundamental_lemma_residual(data, u, y));
    }
    const double secs = seconds_since(t0);
    report(1, "fundamental lemma exactness", worst_in <= 1e-8 && worst_out >= 1e-3 && secs <= 10.0,
           fmt("max residual on trajectories %.2e, min on perturbed %.2e, %.2f s", worst_in, worst_out, secs));
}

void pe_certification()
{
    const Scenario s = resolve(fixture());
    const Trajectory data = collect_for(s);
    const PeReport& pe = *data.pe;
    report(2, "persistency of excitation", s.pe_order == 16 && pe.exciting && pe.rank == 32,
           fmt("order %g, rank %g of %g, margin %.3e", pe.order, static_cast<double>(pe.rank),
               static_cast<double>(pe.required_rank), pe.margin));
}

void qp_correctness()
{
    Rng rng(2001);
    double worst_kkt = 0.0;
    for (int k = 0; k < 20; ++k) {
        const Eigen::Index n = 10, m = 4;
        Matrix M(n, n), A(m, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) M(i, j) = rng.uniform(-1, 1);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < n; ++j) A(i, j) = rng.uniform(-1, 1);
        QpProblem p = QpProblem::unconstrained(M * M.transpose() + 0.1 * Matrix::Identity(n, n),
                                               rng.uniform_vector(n, 1.0));
        p.Aeq = A;
        p.beq = rng.uniform_vector(m, 1.0);
        Matrix K = Matrix::Zero(n + m, n + m);
        K << p.P, A.transpose(), A, Matrix::Zero(m, m);
        Vector rhs(n + m);
        rhs << -p.q, p.beq;
        const Vector z = K.fullPivLu().solve(rhs).head(n);
        const QpSolution s = solve(p);
        worst_kkt = std::max(worst_kkt, s.status == QpStatus::optimal ? (s.z - z).cwiseAbs().maxCoeff() : kInf);
    }

    // every solve of the fixture run, noisy and noise-free
    long solves = 0, bad = 0;
    int max_iter = 0;
    double max_primal = 0.0, max_dual = 0.0;
    for (double v : {1e-3, 0.0}) {
        ExperimentConfig c = fixture();
        c.v_bar = v;
        const Scenario s = resolve(c);
        auto data = std::make_shared<const HankelPair>(HankelPair::from(collect_for(s), s.mpc.L + s.mpc.eta));
        DataDrivenController ctrl(data, s.mpc);
        run_closed_loop(s, make_schedule(s), ctrl, [&](long, const StepOutput&) {
            const QpSolution& q = ctrl.state().cached->qp;
            ++solves;
            max_iter = std::max(max_iter, q.iterations);
            max_primal = std::max(max_primal, q.primal_residual);
            max_dual = std::max(max_dual, q.dual_residual);
            const bool ok = q.status == QpStatus::optimal && q.iterations <= 50'000 &&
                            q.primal_residual <= 1e-8 + 1e-8 * q.primal_scale &&
                            q.dual_residual <= 1e-8 + 1e-8 * q.dual_scale;
            bad += !ok;
        });
    }
    report(3, "QP correctness", worst_kkt <= 1e-6 && bad == 0,
           fmt("closed-form gap %.2e; %g fixture solves, %g outside tolerance, max iterations %g", worst_kkt,
               static_cast<double>(solves), static_cast<double>(bad), max_iter) +
               fmt(" (absolute residuals up to %.1e primal, %.1e dual; tolerance 1e-8 on the term-scaled test)",
                   max_primal, max_dual));
}

void structural_identity()
{
    const SystemModel m = batch_reactor();
    const int n = 12;
    const auto s = structural_matrices(m, n);
    Rng rng(3001);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const Sequence u = ddrmpc::testing::random_sequence(rng, n, 2, 1.0);
        const Sequence w = ddrmpc::testing::random_sequence(rng, n, 4, 1e-2);
        const Vector x0 = rng.uniform_vector(4, 1.0);
        const auto r = simulate(m, x0, u, w);
        Vector ux(n * 2 + 4), lhs(n * 4);
        ux << stack(u), x0;
        lhs << stack(u), stack(r.outputs);
        Vector rhs = s.psi * ux;
        rhs.tail(n * 2) += s.upsilon_I * stack(w);
        worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
    }
    report(4, "structural identity", worst <= 1e-10, fmt("max deviation %.2e over 20 trajectories", worst));
}

void dos_model()
{
    long schedules = 0, invalid = 0, gap_violations = 0;
    std::vector<AttackParams> params;
    for (double r : {0.5, 0.8841, 0.9142, 0.9317}) params.push_back(AttackParams::from_ratio(r));
    params.push_back({1.0, 4.0, 1.0, 4.0});
    params.push_back({2.0, 3.0, 1.0, 5.0});
    for (const auto& p : params) {
        const long bound = static_cast<long>(std::ceil(inter_success_bound(p)));
        std::vector<DosSchedule> all;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) all.push_back(generate_random(p, 500, seed));
        all.push_back(generate_worst_case(p, 500));
        for (const auto& s : all) {
            ++schedules;
            invalid += !validate_schedule(s);
            gap_violations += max_success_gap(s.indicators) > bound;
        }
    }
    const double T = inter_success_bound({1.0, 4.0, 1.0, 4.0});
    report(5, "DoS model", invalid == 0 && gap_violations == 0 && T == 5.0,
           fmt("%g schedules of length 500: %g invalid, %g gap violations; T(1,4,1,4) = %.17g",
               static_cast<double>(schedules), static_cast<double>(invalid), static_cast<double>(gap_violations), T));
}

void deadbeat_baseline()
{
    const SystemModel m = batch_reactor();
    const GainSet g = synthesize_gains(m);
    const Matrix E = m.A - g.L_obs * m.C;
    const double nil = (E * E).norm();

    // noise-free loop on a random schedule; check the predictor state used at each delivery
    ModelBasedController ctrl(m, g);
    const DosSchedule sched = generate_random(AttackParams::from_ratio(0.8841), 200, 4001);
    Vector x = ddrmpc::default_initial_state(4);
    int run = 0;
    long checked = 0;
    double worst = 0.0;
    for (long t = 0; t < 200; ++t) {
        const bool attacked = sched.attacked(static_cast<std::size_t>(t));
        const Vector handed = ctrl.state().xbar;
        const StepOutput out = ctrl.step(t, attacked, nullptr);
        if (!attacked && run >= 2) {
            worst = std::max(worst, (handed - x).norm());
            ++checked;
        }
        run = attacked ? 0 : run + 1;
        const Vector y = m.C * x;
        ctrl.observe(out.u, y);
        x = m.A * x + m.B * out.u;
    }
    report(6, "deadbeat baseline", nil <= 1e-8 && worst <= 1e-8 && checked > 0,
           fmt("||(A - L C)^2|| = %.2e; predictor error %.2e over %g checked deliveries", nil, worst,
               static_cast<double>(checked)));
}

void closed_loop()
{
    const ExperimentConfig tmpl = fixture();
    std::string detail;
    double slowest = 0.0;
    int diverged = 0, over = 0;
    double worst_free = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
        ExperimentConfig noisy = sweep_cell_config(tmpl, "ratio", 0.8841, rep);
        ExperimentConfig clean = noisy;
        clean.v_bar = 0.0;
        const RunRecord rn = run_experiment(noisy);
        const RunRecord rc = run_experiment(clean);
        slowest = std::max({slowest, rn.wall_time, rc.wall_time});
        const double free_tail = rc.summary.status == "ok" ? rc.summary.iss.tail_norm : kInf;
        worst_free = std::max(worst_free, free_tail);
        const double bound = 10.0 * (free_tail + tmpl.v_bar);
        if (rn.summary.status != "ok") ++diverged;
        else if (!(rn.summary.iss.tail_norm <= bound)) ++over;
        detail += fmt(" [rep %g: ", rep) + rn.summary.status +
                  fmt(" at %g steps, tail %.2e, noise-free tail %.2e]", static_cast<double>(rn.summary.steps),
                      rn.summary.iss.tail_norm, free_tail);
    }
    const bool pass = diverged == 0 && over == 0 && worst_free <= 1e-4 && slowest <= 60.0;
    report(7, "closed-loop stabilization", pass,
           fmt("%g of 5 diverged, %g above bound, noise-free tail max %.2e, slowest run %.1f s;", diverged, over,
               worst_free, slowest) +
               detail);
}

void lyapunov_proxy()
{
    ExperimentConfig c = fixture();
    c.v_bar = 1e-6;
    const RunRecord r = run_experiment(c);
    double prev = std::nan(""), worst = -kInf;
    long solves = 0;
    for (const auto& s : r.steps) {
        if (std::isnan(s.cost)) continue;
        if (!std::isnan(prev)) worst = std::max(worst, s.cost - prev);
        prev = s.cost;
        ++solves;
    }
    report(8, "Lyapunov-proxy monotonicity", r.summary.status == "ok" && solves > 1 && worst <= 1e-6,
           fmt("%g solves, largest increase of J* %.2e", static_cast<double>(solves), worst));
}

void trade_off()
{
    const ExperimentConfig tmpl = fixture();
    auto medians = [&](const std::string& axis, const std::vector<double>& values, int& diverged) {
        const auto cells = sweep(tmpl, axis, values, 5);
        std::vector<double> out;
        for (double v : values) {
            std::vector<double> tails;
            for (const auto& c : cells) {
                if (c.value != v) continue;
                if (c.status != "ok") ++diverged;
                tails.push_back(c.status == "ok" ? c.summary.iss.tail_norm : kInf);
            }
            out.push_back(median(tails));
        }
        return out;
    };
    int div_ratio = 0, div_noise = 0;
    const auto by_ratio = medians("ratio", {0.8841, 0.9142, 0.9317}, div_ratio);
    const auto by_noise = medians("v_bar", {1e-4, 1e-3, 1e-2}, div_noise);
    auto nondecreasing = [](const std::vector<double>& v) {
        for (std::size_t i = 1; i < v.size(); ++i)
            if (!(std::isfinite(v[i]) && std::isfinite(v[i - 1]) && v[i] >= v[i - 1])) return false;
        return true;
    };
    const bool pass = nondecreasing(by_ratio) && nondecreasing(by_noise);
    report(9, "trade-off property", pass,
           fmt("median tails by ratio %.2e %.2e %.2e", by_ratio[0], by_ratio[1], by_ratio[2]) +
               fmt(", by v_bar %.2e %.2e %.2e", by_noise[0], by_noise[1], by_noise[2]) +
               fmt("; diverged runs %g of 15 and %g of 15 (tail undefined)", div_ratio, div_noise));
}

int cli(const std::string& args)
{
    const std::string cmd = std::string(DDRMPC_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism()
{
    const fs::path root = fs::temp_directory_path() / "ddrmpc_acceptance";
    fs::remove_all(root);
    const std::vector<std::pair<std::string, std::vector<std::string>>> runs = {
        {"run -T 200", {"run.csv", "schedule.txt", "schedule.json"}},
        {"run -T 200 --v-bar 1e-4 --controller model-based", {"run.csv", "schedule.txt"}},
        {"sweep --axis v_bar --values 1e-5,1e-4 --reps 2 -T 100", {"sweep.csv"}},
        {"collect", {"offline.csv"}},
        {"attack-check --attack worst-case -T 500", {"schedule.txt"}},
    };
    long compared = 0, differ = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const fs::path a = root / (std::to_string(i) + "a"), b = root / (std::to_string(i) + "b");
        const int ca = cli(runs[i].first + " -o " + a.string());
        const int cb = cli(runs[i].first + " -o " + b.string());
        if (ca != cb) ++differ;
        for (const auto& f : runs[i].second) {
            ++compared;
            if (!fs::exists(a / f) || !fs::exists(b / f) || io::read_file(a / f) != io::read_file(b / f)) ++differ;
        }
    }
    report(10, "determinism", differ == 0,
           fmt("%g output files from %g repeated CLI invocations, %g differ", static_cast<double>(compared),
               static_cast<double>(runs.size()), static_cast<double>(differ)));
}

} // namespace

int main()
{
    warning_sink() = nullptr;
    const auto t0 = Clock::now();
    fundamental_lemma();
    pe_certification();
    qp_correctness();
    structural_identity();
    dos_model();
    deadbeat_baseline();
    closed_loop();
    lyapunov_proxy();
    trade_off();
    determinism();
    std::printf("%d of 10 criteria passed (%.0f s)\n", 10 - failures, seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
