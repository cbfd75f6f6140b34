#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ddrmpc/common.hpp"
#include "ddrmpc/dos.hpp"
#include "ddrmpc/hankel.hpp"
#include "ddrmpc/lti.hpp"
#include "ddrmpc/qp.hpp"

namespace ddrmpc::io {

using json = nlohmann::json;

/// Round-trip formatting of a double.
inline std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

inline json load_json(const std::filesystem::path& path)
{
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

/// Dense matrix as {"rows", "cols", "data"} with row-major data.
inline json to_json(const Matrix& m)
{
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Matrix matrix_from_json(const json& j, const std::string& what)
{
    try {
        const auto rows = j.at("rows").get<Eigen::Index>();
        const auto cols = j.at("cols").get<Eigen::Index>();
        const auto& data = j.at("data");
        if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
            throw ConfigError(what + ": data length differs from rows * cols");
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j2 = 0; j2 < cols; ++j2)
                m(i, j2) = data[static_cast<std::size_t>(i * cols + j2)].get<double>();
        return m;
    } catch (const json::exception& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

/// Vector as a plain array; infinite entries become null.
inline json to_json(const Vector& v)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::isfinite(v(i))) a.push_back(v(i));
        else a.push_back(nullptr);
    }
    return a;
}

/// Inverse of to_json(Vector); null maps to null_value.
inline Vector vector_from_json(const json& j, const std::string& what, double null_value = kInf)
{
    if (!j.is_array()) throw ConfigError(what + ": expected an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (j[i].is_null()) v(static_cast<Eigen::Index>(i)) = null_value;
        else if (j[i].is_number()) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
        else throw ConfigError(what + ": entry " + std::to_string(i) + " is not a number");
    }
    return v;
}

inline json model_to_json(const SystemModel& m, bool continuous = false)
{
    json j;
    j["dims"] = {{"nx", m.nx()}, {"nu", m.nu()}, {"ny", m.ny()}};
    j["A"] = to_json(m.A);
    j["B"] = to_json(m.B);
    j["C"] = to_json(m.C);
    j["D"] = to_json(m.D);
    j["dt"] = m.dt;
    j["continuous"] = continuous;
    return j;
}

/// Reads a model; continuous-time models are discretized with their dt.
inline SystemModel model_from_json(const json& j)
{
    SystemModel m;
    m.A = matrix_from_json(j.at("A"), "model A");
    m.B = matrix_from_json(j.at("B"), "model B");
    m.C = matrix_from_json(j.at("C"), "model C");
    m.D = j.contains("D") ? matrix_from_json(j["D"], "model D") : Matrix::Zero(m.C.rows(), m.B.cols());
    m.dt = j.value("dt", 0.0);
    if (j.contains("dims")) {
        const auto& d = j["dims"];
        if (d.value("nx", m.nx()) != m.nx() || d.value("nu", m.nu()) != m.nu() || d.value("ny", m.ny()) != m.ny())
            throw ConfigError("model: dims disagree with the matrices");
    }
    try {
        m.validate();
    } catch (const DimensionError& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    if (j.value("continuous", false)) {
        if (!(m.dt > 0.0)) throw ConfigError("model: continuous model needs dt > 0");
        return discretize(m, m.dt);
    }
    return m;
}

inline json qp_to_json(const QpProblem& p)
{
    return {{"P", to_json(p.P)},     {"q", to_json(p.q)},   {"Aeq", to_json(p.Aeq)},
            {"beq", to_json(p.beq)}, {"lb", to_json(p.lb)}, {"ub", to_json(p.ub)}};
}

inline QpProblem qp_from_json(const json& j)
{
    QpProblem p;
    p.P = matrix_from_json(j.at("P"), "qp P");
    p.q = vector_from_json(j.at("q"), "qp q");
    p.Aeq = matrix_from_json(j.at("Aeq"), "qp Aeq");
    p.beq = vector_from_json(j.at("beq"), "qp beq");
    p.lb = vector_from_json(j.at("lb"), "qp lb", -kInf);
    p.ub = vector_from_json(j.at("ub"), "qp ub", kInf);
    return p;
}

inline json params_to_json(const AttackParams& p)
{
    return {{"kappa_f", p.kappa_f}, {"nu_f", p.nu_f}, {"kappa_d", p.kappa_d}, {"nu_d", p.nu_d}};
}

inline AttackParams params_from_json(const json& j)
{
    AttackParams p;
    p.kappa_f = j.value("kappa_f", p.kappa_f);
    p.nu_f = j.value("nu_f", p.nu_f);
    p.kappa_d = j.value("kappa_d", p.kappa_d);
    p.nu_d = j.value("nu_d", p.nu_d);
    return p;
}

/// Sidecar describing a schedule: parameters, seed, ratio and inter-success bound.
inline json schedule_sidecar(const DosSchedule& s)
{
    json j;
    j["params"] = params_to_json(s.params);
    if (s.seed) j["seed"] = *s.seed;
    else j["seed"] = "adversarial";
    j["length"] = s.size();
    j["attack_ratio"] = s.attack_ratio();
    j["resilience_margin"] = s.params.resilience_margin();
    if (s.params.resilience_margin() < 1.0) j["inter_success_bound"] = inter_success_bound(s.params);
    else j["inter_success_bound"] = nullptr;
    j["max_success_gap"] = max_success_gap(s.indicators);
    return j;
}

/// Writes base.txt (one 0/1 line) and base.json.
inline void save_schedule(const DosSchedule& s, const std::filesystem::path& base)
{
    write_file(base.string() + ".txt", to_text(s.indicators) + "\n");
    write_file(base.string() + ".json", schedule_sidecar(s).dump(2) + "\n");
}

/// Reads a 0/1 text file; parameters come from the sidecar next to it when present.
inline DosSchedule load_schedule(const std::filesystem::path& txt)
{
    DosSchedule s;
    s.indicators = from_text(read_file(txt));
    auto side = txt;
    side.replace_extension(".json");
    if (std::filesystem::exists(side)) {
        const json j = load_json(side);
        if (j.contains("params")) s.params = params_from_json(j["params"]);
        if (j.contains("seed") && j["seed"].is_number_unsigned()) s.seed = j["seed"].get<std::uint64_t>();
    }
    return s;
}

/// Offline record as CSV: t, u_*, y_*.
inline std::string trajectory_csv(const Trajectory& tr)
{
    tr.validate();
    std::string out = "t";
    const Eigen::Index nu = tr.inputs.empty() ? 0 : tr.inputs.front().size();
    const Eigen::Index ny = tr.outputs.empty() ? 0 : tr.outputs.front().size();
    for (Eigen::Index i = 0; i < nu; ++i) out += ",u_" + std::to_string(i);
    for (Eigen::Index i = 0; i < ny; ++i) out += ",y_" + std::to_string(i);
    out += '\n';
    for (std::size_t t = 0; t < tr.size(); ++t) {
        out += std::to_string(t);
        for (Eigen::Index i = 0; i < nu; ++i) out += "," + fmt(tr.inputs[t](i));
        for (Eigen::Index i = 0; i < ny; ++i) out += "," + fmt(tr.outputs[t](i));
        out += '\n';
    }
    return out;
}

inline json trajectory_sidecar(const Trajectory& tr)
{
    json j;
    j["length"] = tr.size();
    j["seed"] = tr.seed;
    j["v_bar"] = tr.v_bar;
    if (tr.pe) {
        j["pe"] = {{"exciting", tr.pe->exciting}, {"order", tr.pe->order},
                   {"rank", tr.pe->rank},         {"required_rank", tr.pe->required_rank},
                   {"margin", tr.pe->margin}};
    }
    return j;
}

} // namespace ddrmpc::io
