#pragma once

#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <string>

#include "ddrmpc/common.hpp"
#include "ddrmpc/ddmpc.hpp"
#include "ddrmpc/lti.hpp"

namespace ddrmpc {

/// What one control step produced.
struct StepOutput {
    Vector u;
    bool solved = false;
    double cost = std::numeric_limits<double>::quiet_NaN(); ///< optimal value when solved
    int iterations = 0;                                      ///< solver iterations when solved
};

/// Closed-loop policy. At step t the harness calls step() with the channel outcome and,
/// after the plant responds, observe() with the sensor's noisy output of the same step.
class Controller {
public:
    virtual ~Controller() = default;

    /// fresh_zeta holds zeta_{t-eta} .. zeta_{t-1} on delivered steps with t >= window(),
    /// nullptr otherwise.
    virtual StepOutput step(long t, bool attacked, const Sequence* fresh_zeta) = 0;
    virtual void observe(const Vector& /*u*/, const Vector& /*zeta*/) {}
    /// Length of the output window a delivered packet must carry.
    virtual int window() const { return 0; }
    virtual std::string name() const = 0;
};

struct ControllerState {
    std::optional<long> last_success; ///< step of the last solve
    std::optional<MpcSolution> cached;
    Sequence applied;
    std::deque<Vector> input_window;  ///< last eta applied inputs
    std::deque<Vector> output_window; ///< last eta received noisy outputs
    int solves = 0;
};

/// Predict, hold the plan during attacks, then fall back to zero.
///
/// With period > 0 a delivered packet triggers a new solve only when at least period
/// steps have passed since the previous one; in between the cached plan is replayed.
class DataDrivenController : public Controller {
public:
    DataDrivenController(std::shared_ptr<const HankelPair> data, MpcConfig config, int period = 0,
                         QpSettings qp = {})
        : data_(std::move(data)), config_(std::move(config)), period_(period), qp_(qp)
    {
        if (!data_) throw PreconditionError("DataDrivenController: no data");
        config_.validate();
        if (period_ < 0 || period_ > config_.L)
            throw PreconditionError("DataDrivenController: period must lie in [0, L]");
    }

    StepOutput step(long t, bool attacked, const Sequence* fresh_zeta) override
    {
        StepOutput out;
        const int eta = config_.eta;
        const bool ready = t >= eta && static_cast<int>(state_.input_window.size()) == eta;
        if (!attacked && fresh_zeta != nullptr) {
            if (static_cast<int>(fresh_zeta->size()) != eta)
                throw PreconditionError("DataDrivenController: packet must carry eta outputs");
            state_.output_window.assign(fresh_zeta->begin(), fresh_zeta->end());
        } else if (!attacked && t >= eta) {
            throw PreconditionError("DataDrivenController: delivered step without a packet");
        }

        const long offset = state_.last_success ? t - *state_.last_success : std::numeric_limits<long>::max();
        const bool due = period_ == 0 || !state_.cached || offset >= period_;
        if (!attacked && ready && due) {
            MpcProblem p{data_, Sequence(state_.input_window.begin(), state_.input_window.end()),
                         Sequence(state_.output_window.begin(), state_.output_window.end()), config_};
            MpcSolution sol = solve_mpc(p, state_.cached ? &*state_.cached : nullptr, qp_);
            out.solved = true;
            out.cost = sol.cost;
            out.iterations = sol.qp.iterations;
            out.u = sol.u_pred.front();
            state_.cached = std::move(sol);
            state_.last_success = t;
            ++state_.solves;
        } else if (state_.cached && offset <= config_.L - 1) {
            out.u = predicted_input_at(*state_.cached, static_cast<int>(offset));
        } else {
            out.u = Vector::Zero(data_->nu);
        }

        state_.applied.push_back(out.u);
        state_.input_window.push_back(out.u);
        if (static_cast<int>(state_.input_window.size()) > eta) state_.input_window.pop_front();
        return out;
    }

    int window() const override { return config_.eta; }
    std::string name() const override { return period_ > 0 ? "data-driven-periodic" : "data-driven"; }
    const ControllerState& state() const { return state_; }
    const MpcConfig& config() const { return config_; }

private:
    std::shared_ptr<const HankelPair> data_;
    MpcConfig config_;
    int period_;
    QpSettings qp_;
    ControllerState state_;
};

struct BaselineState {
    Vector xbar; ///< observer estimate
    Vector xhat; ///< predictor state
};

/// Observer at the sensor, predictor at the controller, u = K xhat.
///
/// The observer sees every noisy output; a delivered packet copies its estimate into
/// the predictor.
class ModelBasedController : public Controller {
public:
    ModelBasedController(SystemModel model, GainSet gains) : model_(std::move(model)), gains_(std::move(gains))
    {
        model_.validate();
        detail::require(gains_.K.rows() == model_.nu() && gains_.K.cols() == model_.nx(),
                        "ModelBasedController: K must be n_u x n_x");
        detail::require(gains_.L_obs.rows() == model_.nx() && gains_.L_obs.cols() == model_.ny(),
                        "ModelBasedController: L_obs must be n_x x n_y");
        state_.xbar = Vector::Zero(model_.nx());
        state_.xhat = Vector::Zero(model_.nx());
    }

    StepOutput step(long /*t*/, bool attacked, const Sequence* /*fresh_zeta*/) override
    {
        if (!attacked) state_.xhat = state_.xbar;
        StepOutput out;
        out.u = gains_.K * state_.xhat;
        state_.xhat = model_.A * state_.xhat + model_.B * out.u;
        return out;
    }

    void observe(const Vector& u, const Vector& zeta) override
    {
        const Vector innov = zeta - model_.C * state_.xbar - model_.D * u;
        state_.xbar = model_.A * state_.xbar + model_.B * u + gains_.L_obs * innov;
    }

    std::string name() const override { return "model-based"; }
    const BaselineState& state() const { return state_; }

private:
    SystemModel model_;
    GainSet gains_;
    BaselineState state_;
};

/// Zero input at every step.
class OpenLoopController : public Controller {
public:
    explicit OpenLoopController(Eigen::Index nu) : nu_(nu) {}

    StepOutput step(long, bool, const Sequence*) override { return {Vector::Zero(nu_)}; }
    std::string name() const override { return "open-loop"; }

private:
    Eigen::Index nu_;
};

} // namespace ddrmpc
