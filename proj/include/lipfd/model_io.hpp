#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "lipfd/linalg.hpp"
#include "lipfd/model.hpp"
#include "lipfd/residuals.hpp"
#include "lipfd/synthesis.hpp"

// JSON documents for plants, residual structures, observer designs and thresholds.
// Matrices are nested row-major arrays; doubles are written with round-trip precision.

namespace lipfd::io {

using json = nlohmann::json;

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline json to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Matrix matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
        throw FormatError(name + ": expected " + std::to_string(rows) + " rows");
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw FormatError(name + ": row " + std::to_string(i) + " must have " + std::to_string(cols) + " entries");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            const json& v = row[static_cast<std::size_t>(c)];
            if (!v.is_number()) throw FormatError(name + ": non-numeric entry");
            m(i, c) = v.get<double>();
        }
    }
    return m;
}

inline Matrix matrix_from_json(const json& j, const std::string& name) {
    if (!j.is_array()) throw FormatError(name + ": expected an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows > 0 && j[0].is_array() ? static_cast<Eigen::Index>(j[0].size()) : 0;
    return matrix_from_json(j, rows, cols, name);
}

inline Vector vector_from_json(const json& j, const std::string& name) {
    if (!j.is_array()) throw FormatError(name + ": expected an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw FormatError(name + ": non-numeric entry");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

namespace detail {

inline const json& field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw FormatError(std::string("missing field '") + key + "'");
    return *it;
}

inline Eigen::Index dim(const json& j, const char* key) {
    const json& v = field(j, key);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw FormatError(std::string(key) + ": expected a nonnegative integer");
    return static_cast<Eigen::Index>(v.get<long long>());
}

inline double param(const std::map<std::string, double>& params, const char* key) {
    auto it = params.find(key);
    if (it == params.end()) throw FormatError(std::string("nonlinearity parameter '") + key + "' missing");
    return it->second;
}

}  // namespace detail

inline json to_json(const NonlinearMap& phi) {
    if (phi.kind == "custom") throw FormatError("nonlinearity of kind 'custom' cannot be serialized");
    json j;
    j["kind"] = phi.kind;
    j["params"] = phi.params;
    j["declared_lipschitz_bound"] = phi.declared_lipschitz_bound;
    json box = json::array();
    for (const auto& iv : phi.domain_box) box.push_back({iv.lo, iv.hi});
    j["domain_box"] = box;
    return j;
}

inline NonlinearMap nonlinearity_from_json(const json& j, Eigen::Index n, Eigen::Index m) {
    const std::string kind = detail::field(j, "kind").get<std::string>();
    std::map<std::string, double> params;
    if (j.contains("params")) params = j.at("params").get<std::map<std::string, double>>();
    NonlinearMap phi;
    if (kind == "none") {
        phi = NonlinearMap::zero(n, m);
    } else if (kind == "manipulator_gravity") {
        const auto row = static_cast<Eigen::Index>(params.count("row") ? params.at("row") : 2.0);
        const auto idx = static_cast<Eigen::Index>(params.count("angle_index") ? params.at("angle_index") : 3.0);
        phi = NonlinearMap::manipulator_gravity(detail::param(params, "mgh"), n, m, row, idx);
    } else {
        throw FormatError("unknown nonlinearity '" + kind + "'");
    }
    if (j.contains("declared_lipschitz_bound")) phi.declared_lipschitz_bound = j.at("declared_lipschitz_bound").get<double>();
    if (j.contains("domain_box")) {
        const json& box = j.at("domain_box");
        if (!box.is_array() || static_cast<Eigen::Index>(box.size()) != n) throw FormatError("domain_box: expected n intervals");
        for (std::size_t i = 0; i < box.size(); ++i) {
            if (!box[i].is_array() || box[i].size() != 2) throw FormatError("domain_box: intervals are [lo, hi] pairs");
            phi.domain_box[i] = Interval{box[i][0].get<double>(), box[i][1].get<double>()};
        }
    }
    return phi;
}

inline json to_json(const LipschitzPlant& p) {
    p.validate();
    json j;
    j["n"] = p.n();
    j["m"] = p.m();
    j["l"] = p.l();
    j["k1"] = p.k1();
    j["k2"] = p.k2();
    j["A"] = to_json(p.A);
    j["B"] = to_json(p.B);
    j["C"] = to_json(p.C);
    j["D1"] = to_json(p.D1);
    j["D2"] = to_json(p.D2);
    j["Q1"] = to_json(p.Q1);
    j["Q2"] = to_json(p.Q2);
    j["phi"] = to_json(p.phi);
    return j;
}

inline LipschitzPlant plant_from_json(const json& j) {
    using detail::dim;
    using detail::field;
    const auto n = dim(j, "n"), m = dim(j, "m"), l = dim(j, "l"), k1 = dim(j, "k1"), k2 = dim(j, "k2");
    LipschitzPlant p;
    p.A = matrix_from_json(field(j, "A"), n, n, "A");
    p.B = matrix_from_json(field(j, "B"), n, m, "B");
    p.C = matrix_from_json(field(j, "C"), l, n, "C");
    p.D1 = matrix_from_json(field(j, "D1"), n, k1, "D1");
    p.D2 = matrix_from_json(field(j, "D2"), l, k1, "D2");
    p.Q1 = matrix_from_json(field(j, "Q1"), n, k2, "Q1");
    p.Q2 = matrix_from_json(field(j, "Q2"), l, k2, "Q2");
    p.phi = j.contains("phi") ? nonlinearity_from_json(j.at("phi"), n, m) : NonlinearMap::zero(n, m);
    p.validate();
    return p;
}

inline json to_json(const ResidualStructure& rs) {
    rs.validate();
    if (rs.psi_kind == "custom") throw FormatError("Psi of kind 'custom' cannot be serialized");
    json j;
    j["r"] = rs.r();
    j["l"] = rs.l();
    j["m"] = rs.m();
    j["M1"] = to_json(rs.M1);
    j["M2"] = to_json(rs.M2);
    j["M3"] = to_json(rs.M3);
    j["M3n"] = to_json(rs.M3n);
    j["N1"] = to_json(rs.N1);
    j["N2"] = to_json(rs.N2);
    j["N3"] = to_json(rs.N3);
    j["Upsilon"] = to_json(rs.Upsilon);
    j["psi"] = {{"kind", rs.psi_kind}, {"params", rs.psi_params}};
    return j;
}

inline ResidualStructure residual_structure_from_json(const json& j) {
    using detail::dim;
    using detail::field;
    const auto r = dim(j, "r"), l = dim(j, "l"), m = dim(j, "m");
    ResidualStructure rs;
    rs.M1 = matrix_from_json(field(j, "M1"), r, l, "M1");
    rs.M2 = matrix_from_json(field(j, "M2"), r, l, "M2");
    rs.M3 = matrix_from_json(field(j, "M3"), r, l, "M3");
    rs.M3n = matrix_from_json(field(j, "M3n"), r, l, "M3n");
    rs.N1 = matrix_from_json(field(j, "N1"), r, m, "N1");
    rs.N2 = matrix_from_json(field(j, "N2"), r, m, "N2");
    rs.N3 = matrix_from_json(field(j, "N3"), r, m, "N3");
    rs.Upsilon = matrix_from_json(field(j, "Upsilon"), r, l, "Upsilon");
    const json& psi = field(j, "psi");
    rs.psi_kind = field(psi, "kind").get<std::string>();
    if (psi.contains("params")) rs.psi_params = psi.at("params").get<std::map<std::string, double>>();
    if (rs.psi_kind == "none") {
        rs.psi = [r](const Vector&, const Vector&) { return Vector(Vector::Zero(r)); };
    } else if (rs.psi_kind == "manipulator_gravity_output") {
        const double mgh = detail::param(rs.psi_params, "mgh");
        const double sign = rs.psi_params.count("sign") ? rs.psi_params.at("sign") : 1.0;
        const auto row = static_cast<Eigen::Index>(rs.psi_params.count("row") ? rs.psi_params.at("row") : 1.0);
        const auto idx = static_cast<Eigen::Index>(rs.psi_params.count("output_index") ? rs.psi_params.at("output_index") : 1.0);
        if (row < 0 || row >= r || idx < 0 || idx >= l) throw FormatError("psi: index out of range");
        rs.psi = [=](const Vector& y, const Vector&) {
            Vector out = Vector::Zero(r);
            out(row) = sign * mgh * std::sin(y(idx));
            return out;
        };
    } else {
        throw FormatError("unknown Psi kind '" + rs.psi_kind + "'");
    }
    rs.validate();
    return rs;
}

inline json to_json(const ObserverDesign& d) {
    json j;
    j["solver_status"] = sdp::to_string(d.solver_status);
    j["solver_message"] = d.solver_message;
    j["form"] = to_string(d.form);
    j["epsilon"] = d.epsilon;
    j["mu"] = d.mu;
    j["gamma"] = d.gamma;
    j["L"] = to_json(d.L);
    j["P"] = to_json(d.P);
    j["X"] = to_json(d.X);
    j["N"] = to_json(d.N);
    const auto& c = d.certificates;
    j["certificates"] = {{"lmi_max_eig", c.lmi_max_eig},
                         {"preschur_max_eig", c.preschur_max_eig},
                         {"closedloop_spectral_abscissa", c.closedloop_spectral_abscissa},
                         {"decay_max_eig", c.decay_max_eig},
                         {"projection_max_eig", c.projection_max_eig},
                         {"pass", c.pass}};
    return j;
}

inline sdp::Status parse_status(const std::string& s) {
    for (auto st : {sdp::Status::optimal, sdp::Status::near_optimal, sdp::Status::infeasible, sdp::Status::unbounded,
                    sdp::Status::numerical_failure}) {
        if (sdp::to_string(st) == s) return st;
    }
    throw FormatError("unknown solver status '" + s + "'");
}

inline ObserverDesign design_from_json(const json& j) {
    using detail::field;
    ObserverDesign d;
    d.solver_status = parse_status(field(j, "solver_status").get<std::string>());
    if (j.contains("solver_message")) d.solver_message = j.at("solver_message").get<std::string>();
    if (j.contains("form")) d.form = parse_lmi_form(j.at("form").get<std::string>());
    d.epsilon = field(j, "epsilon").get<double>();
    d.mu = field(j, "mu").get<double>();
    d.gamma = field(j, "gamma").get<double>();
    d.L = matrix_from_json(field(j, "L"), "L");
    if (j.contains("P")) d.P = matrix_from_json(j.at("P"), "P");
    if (j.contains("X")) d.X = matrix_from_json(j.at("X"), "X");
    if (j.contains("N")) d.N = matrix_from_json(j.at("N"), "N");
    if (j.contains("certificates")) {
        const json& c = j.at("certificates");
        auto num = [&](const char* k) {
            return c.contains(k) && c.at(k).is_number() ? c.at(k).get<double>() : std::numeric_limits<double>::quiet_NaN();
        };
        d.certificates.lmi_max_eig = num("lmi_max_eig");
        d.certificates.preschur_max_eig = num("preschur_max_eig");
        d.certificates.closedloop_spectral_abscissa = num("closedloop_spectral_abscissa");
        d.certificates.decay_max_eig = num("decay_max_eig");
        d.certificates.projection_max_eig = num("projection_max_eig");
        d.certificates.pass = c.value("pass", false);
    }
    return d;
}

inline json to_json(const ThresholdSet& th) {
    return json{{"J_th", to_json(th.J_th)},
                {"source_runs", th.source_runs},
                {"safety_factor", th.safety_factor},
                {"window_len", th.window_len},
                {"start_index", th.start_index}};
}

inline ThresholdSet thresholds_from_json(const json& j) {
    ThresholdSet th;
    th.J_th = vector_from_json(detail::field(j, "J_th"), "J_th");
    if (j.contains("source_runs")) th.source_runs = j.at("source_runs").get<std::vector<std::string>>();
    th.safety_factor = j.value("safety_factor", 1.0);
    th.window_len = j.value("window_len", Eigen::Index{0});
    th.start_index = j.value("start_index", Eigen::Index{0});
    return th;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << j.dump(2) << '\n';
}

}  // namespace lipfd::io
