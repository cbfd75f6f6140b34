// Minimal library use: collect data, build the controller, run one loop under DoS.

#include <cstdio>

#include "ddrmpc/ddrmpc.hpp"

int main()
{
    using namespace ddrmpc;

    ExperimentConfig cfg;
    cfg.v_bar = 1e-5;
    cfg.attack.ratio = 0.8841;

    const Scenario s = resolve(cfg);
    const Trajectory offline = collect_for(s);
    auto data = std::make_shared<const HankelPair>(HankelPair::from(offline, s.mpc.L + s.mpc.eta));

    DataDrivenController ctrl(data, s.mpc);
    const DosSchedule schedule = make_schedule(s);
    const RunRecord r = run_closed_loop(s, schedule, ctrl);

    std::printf("attacked %.0f%% of steps, %ld solves, status %s, tail %.3e\n", 100.0 * schedule.attack_ratio(),
                r.summary.solves, r.summary.status.c_str(), r.summary.iss.tail_norm);
    return r.summary.status == "ok" ? 0 : 1;
}
