#pragma once

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "esreg/sim.hpp"
#include "esreg/types.hpp"

namespace esreg {

using Json = nlohmann::ordered_json;

/// Bad user input (files, configs, flags); distinct from solver failures so
/// the CLI can map the two onto different exit codes.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field += '"';
                    in.get();
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    if (quoted) throw InputError("csv: unterminated quoted field");
    if (any && (!field.empty() || !row.empty())) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline double parse_number(const std::string& s, const std::string& where) {
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw InputError("csv: non-numeric cell '" + s + "' in " + where);
    return v;
}

}  // namespace detail

struct LoadedCsv {
    Dataset data;  // intercept column prepended
    std::vector<std::string> feature_names;
    std::string response_name;
};

/// Read an RFC-4180 CSV with a header row. The response column is selected
/// by name or 0-based index; every other column becomes a regressor.
inline LoadedCsv load_csv_dataset(const std::string& path, const std::string& response) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    const auto rows = detail::parse_csv(in);
    if (rows.size() < 2) throw InputError("csv: need a header row and at least one data row");
    const auto& header = rows.front();

    std::ptrdiff_t resp = -1;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == response) resp = static_cast<std::ptrdiff_t>(j);
    if (resp < 0) {
        std::size_t idx = 0;
        const auto [ptr, ec] = std::from_chars(response.data(), response.data() + response.size(), idx);
        if (ec == std::errc() && ptr == response.data() + response.size() && idx < header.size())
            resp = static_cast<std::ptrdiff_t>(idx);
    }
    if (resp < 0) throw InputError("csv: response column '" + response + "' not found");

    const std::size_t ncol = header.size();
    const std::size_t nrow = rows.size() - 1;
    LoadedCsv out;
    out.response_name = header[static_cast<std::size_t>(resp)];
    out.data.x = Matrix::Ones(nrow, ncol);  // [1, features]
    out.data.y = Vector(nrow);
    for (std::size_t j = 0; j < ncol; ++j)
        if (static_cast<std::ptrdiff_t>(j) != resp) out.feature_names.push_back(header[j]);

    for (std::size_t i = 0; i < nrow; ++i) {
        const auto& r = rows[i + 1];
        if (r.size() != ncol)
            throw InputError("csv: row " + std::to_string(i + 2) + " has " +
                             std::to_string(r.size()) + " fields, expected " +
                             std::to_string(ncol));
        Eigen::Index col = 1;
        for (std::size_t j = 0; j < ncol; ++j) {
            const std::string where = "row " + std::to_string(i + 2);
            if (static_cast<std::ptrdiff_t>(j) == resp)
                out.data.y(i) = detail::parse_number(r[j], where);
            else
                out.data.x(i, col++) = detail::parse_number(r[j], where);
        }
    }
    try {
        out.data.validate();
    } catch (const std::invalid_argument& e) {
        throw InputError(std::string("csv: ") + e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON serialization

inline Json to_json(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline Json to_json(const FitDiagnostics& d) {
    return Json{{"iterations", d.iterations},
                {"converged", d.converged},
                {"final_gradient_norm", d.final_gradient_norm},
                {"objective", d.objective}};
}

inline Json noise_to_json(const Noise& d) {
    if (d.kind == Noise::Kind::normal) return Json{{"name", "normal"}};
    return Json{{"name", "t"}, {"nu", d.nu}};
}

inline const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::hetero: return "hetero";
        case ModelKind::qar: return "qar";
        case ModelKind::nc_benchmark: return "nc-benchmark";
    }
    return "?";
}

inline Json config_to_json(const SimConfig& cfg) {
    Json j{{"model", to_string(cfg.kind)},
           {"dist", noise_to_json(cfg.noise)},
           {"p", cfg.p},
           {"alpha", cfg.alpha},
           {"n", cfg.sample_size()},
           {"reps", cfg.reps},
           {"level", cfg.level},
           {"seed", cfg.seed},
           {"include_intercept_in_error", cfg.include_intercept_in_error},
           {"redraw_coefficients", cfg.redraw_coefficients},
           {"tol", cfg.control.tol},
           {"max_iter", cfg.control.max_iter}};
    Json methods = Json::array();
    for (EsMethod m : cfg.methods) methods.push_back(to_string(m));
    j["methods"] = methods;
    if (cfg.gamma) j["gamma"] = *cfg.gamma;
    if (cfg.gamma_scale != 1.0) j["gamma_scale"] = cfg.gamma_scale;
    if (cfg.bandwidth) j["bandwidth"] = *cfg.bandwidth;
    if (cfg.kind == ModelKind::qar)
        j["qar"] = Json{{"a0", cfg.qar.a0}, {"a1", cfg.qar.a1}, {"b0", cfg.qar.b0},
                        {"b1", cfg.qar.b1}, {"burn_in", cfg.qar.burn_in}};
    return j;
}

inline Json record_to_json(const ReplicationRecord& r, bool with_timings) {
    if (r.failed) return Json{{"failed", true}, {"error", r.error}};
    Json j{{"rel_error", r.rel_error},
           {"sq_error", r.sq_error_full},
           {"crossings", r.crossings}};
    Json cov = Json::array(), wid = Json::array();
    for (std::size_t k = 0; k < r.covered.size(); ++k) {
        cov.push_back(static_cast<int>(r.covered[k]));
        wid.push_back(r.width[k]);
    }
    j["covered"] = cov;
    j["width"] = wid;
    if (with_timings) j["elapsed_sec"] = r.elapsed_sec;
    return j;
}

inline Json aggregates_to_json(const MethodAggregates& a, bool with_timings) {
    Json j{{"rel_error", {{"mean", a.rel_error_mean}, {"se", a.rel_error_se}}},
           {"mse", {{"mean", a.mse_full}, {"se", a.mse_full_se}}},
           {"coverage", {{"mean", a.coverage_mean}, {"se", a.coverage_se}}},
           {"width", {{"mean", a.width_mean}, {"se", a.width_se}}},
           {"crossings", {{"mean", a.crossings_mean}, {"total", a.crossings_total}}},
           {"failures", a.failures},
           {"successes", a.successes}};
    if (with_timings) j["elapsed_sec_mean"] = a.elapsed_mean;
    return j;
}

/// Full report. Per-replication wall times are omitted unless requested so
/// that identical (seed, flags) runs serialize byte-identically.
inline Json report_to_json(const SimulationReport& rep, bool with_timings = false) {
    Json j{{"schema", "esreg-report/1"}, {"config", config_to_json(rep.config)}};
    j["true_coefficients"] = Json{{"beta_star", to_json(rep.truth.beta_star)},
                                  {"theta_star", to_json(rep.truth.theta_star)},
                                  {"q_eps", rep.truth.q_eps},
                                  {"es_eps", rep.truth.es_eps}};
    if (rep.config.kind == ModelKind::qar)
        j["qar_monotonicity_violations"] = rep.qar_monotonicity_violations;
    Json recs = Json::object(), aggs = Json::object();
    for (std::size_t mi = 0; mi < rep.methods.size(); ++mi) {
        const std::string name = to_string(rep.methods[mi]);
        Json arr = Json::array();
        for (const auto& r : rep.records[mi]) arr.push_back(record_to_json(r, with_timings));
        recs[name] = arr;
        aggs[name] = aggregates_to_json(aggregate(rep.records[mi]), with_timings);
    }
    j["replications"] = recs;
    j["aggregates"] = aggs;
    return j;
}

/// summary.csv: one row per method x metric with mean and standard error.
inline std::string report_to_summary_csv(const SimulationReport& rep,
                                         bool with_timings = false) {
    std::ostringstream out;
    out << "method,metric,mean,se\n";
    out.precision(10);
    for (std::size_t mi = 0; mi < rep.methods.size(); ++mi) {
        const MethodAggregates a = aggregate(rep.records[mi]);
        const std::string m = to_string(rep.methods[mi]);
        out << m << ",rel_error," << a.rel_error_mean << "," << a.rel_error_se << "\n";
        out << m << ",mse," << a.mse_full << "," << a.mse_full_se << "\n";
        out << m << ",coverage," << a.coverage_mean << "," << a.coverage_se << "\n";
        out << m << ",width," << a.width_mean << "," << a.width_se << "\n";
        out << m << ",crossings," << a.crossings_mean << ",0\n";
        out << m << ",failures," << a.failures << ",0\n";
        if (with_timings) out << m << ",elapsed_sec," << a.elapsed_mean << ",0\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Simulation config files (JSON, or a flat TOML subset: `key = value` lines
// with strings, numbers, booleans and one-line arrays).

namespace detail {

inline Json toml_value(std::string v) {
    auto trim = [](std::string& s) {
        const auto a = s.find_first_not_of(" \t");
        const auto b = s.find_last_not_of(" \t");
        s = (a == std::string::npos) ? "" : s.substr(a, b - a + 1);
    };
    trim(v);
    if (v.empty()) throw InputError("toml: empty value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') throw InputError("toml: unterminated string");
        return Json(v.substr(1, v.size() - 2));
    }
    if (v == "true") return Json(true);
    if (v == "false") return Json(false);
    if (v.front() == '[') {
        if (v.back() != ']') throw InputError("toml: unterminated array");
        Json arr = Json::array();
        std::string body = v.substr(1, v.size() - 2);
        std::string item;
        std::istringstream ss(body);
        while (std::getline(ss, item, ',')) {
            trim(item);
            if (!item.empty()) arr.push_back(toml_value(item));
        }
        return arr;
    }
    try {
        if (v.find_first_of(".eE") != std::string::npos) return Json(std::stod(v));
        return Json(static_cast<std::int64_t>(std::stoll(v)));
    } catch (const std::exception&) {
        throw InputError("toml: cannot parse value '" + v + "'");
    }
}

inline Json parse_flat_toml(std::istream& in) {
    Json j = Json::object();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        std::string s = hash == std::string::npos ? line : line.substr(0, hash);
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw InputError("toml: expected 'key = value' at line " + std::to_string(lineno));
        std::string key = s.substr(0, eq);
        const auto ka = key.find_first_not_of(" \t");
        const auto kb = key.find_last_not_of(" \t");
        key = key.substr(ka, kb - ka + 1);
        j[key] = toml_value(s.substr(eq + 1));
    }
    return j;
}

}  // namespace detail

inline SimConfig sim_config_from_json(const Json& j) {
    SimConfig cfg;
    auto get = [&](const char* key) -> std::optional<Json> {
        if (j.contains(key)) return j.at(key);
        return std::nullopt;
    };
    try {
        if (auto v = get("model")) {
            const std::string m = v->get<std::string>();
            if (m == "hetero") cfg.kind = ModelKind::hetero;
            else if (m == "qar") cfg.kind = ModelKind::qar;
            else if (m == "nc-benchmark") cfg.kind = ModelKind::nc_benchmark;
            else throw InputError("config: unknown model '" + m + "'");
        }
        std::string dist = "normal";
        if (auto v = get("dist")) {
            if (v->is_object()) {
                dist = v->at("name").get<std::string>();
                if (v->contains("nu")) cfg.noise.nu = v->at("nu").get<double>();
            } else {
                dist = v->get<std::string>();
            }
        }
        if (auto v = get("nu")) cfg.noise.nu = v->get<double>();
        if (dist == "normal") cfg.noise.kind = Noise::Kind::normal;
        else if (dist == "t") cfg.noise.kind = Noise::Kind::student_t;
        else throw InputError("config: unknown dist '" + dist + "'");
        if (cfg.noise.kind == Noise::Kind::student_t && !(cfg.noise.nu > 2.0))
            throw InputError("config: Student t needs nu > 2");

        if (auto v = get("p")) cfg.p = v->get<int>();
        if (auto v = get("alpha")) cfg.alpha = v->get<double>();
        if (auto v = get("n")) cfg.n = v->get<Eigen::Index>();
        if (auto v = get("reps")) cfg.reps = v->get<int>();
        if (auto v = get("level")) cfg.level = v->get<double>();
        if (auto v = get("seed")) cfg.seed = v->get<std::uint64_t>();
        if (auto v = get("threads")) cfg.threads = v->get<int>();
        if (auto v = get("gamma")) cfg.gamma = v->get<double>();
        if (auto v = get("gamma_scale")) cfg.gamma_scale = v->get<double>();
        if (auto v = get("bandwidth")) cfg.bandwidth = v->get<double>();
        if (auto v = get("tol")) cfg.control.tol = v->get<double>();
        if (auto v = get("max_iter")) cfg.control.max_iter = v->get<int>();
        if (auto v = get("include_intercept_in_error"))
            cfg.include_intercept_in_error = v->get<bool>();
        if (auto v = get("redraw_coefficients")) cfg.redraw_coefficients = v->get<bool>();
        if (auto v = get("qar_a0")) cfg.qar.a0 = v->get<double>();
        if (auto v = get("qar_a1")) cfg.qar.a1 = v->get<double>();
        if (auto v = get("qar_b0")) cfg.qar.b0 = v->get<double>();
        if (auto v = get("qar_b1")) cfg.qar.b1 = v->get<double>();
        if (auto v = get("methods")) {
            cfg.methods.clear();
            for (const auto& s : *v) {
                const auto m = parse_method(s.get<std::string>());
                if (!m) throw InputError("config: unknown method '" + s.get<std::string>() + "'");
                cfg.methods.push_back(*m);
            }
        }
    } catch (const Json::exception& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw InputError("config: alpha must lie in (0,1)");
    if (!(cfg.level > 0.0 && cfg.level < 1.0)) throw InputError("config: level must lie in (0,1)");
    if (cfg.reps < 1) throw InputError("config: reps must be >= 1");
    if (cfg.methods.empty()) throw InputError("config: methods must not be empty");
    return cfg;
}

inline SimConfig load_sim_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    Json j;
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".toml") {
        j = detail::parse_flat_toml(in);
    } else {
        try {
            j = Json::parse(in);
        } catch (const Json::exception& e) {
            throw InputError(std::string("config: ") + e.what());
        }
    }
    return sim_config_from_json(j);
}

}  // namespace esreg
