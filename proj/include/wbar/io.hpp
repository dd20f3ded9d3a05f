#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wbar/claims.hpp"
#include "wbar/errors.hpp"
#include "wbar/quantile.hpp"
#include "wbar/risk.hpp"
#include "wbar/sequential.hpp"
#include "wbar/simharness.hpp"
#include "wbar/solver.hpp"

namespace wbar {

/// Locale-independent, stable decimal rendering used by every writer.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

// ---------------------------------------------------------------------------
// Model specification files
// ---------------------------------------------------------------------------

/// One model per line: `normal m sigma` | `weibull shape scale` |
/// `exponential rate` | `uniform a b` | `pointmass x` | `sample <path>`.
/// Blank lines and #-comments are skipped. Errors carry the line number.
inline std::vector<QuantileFunction> parse_model_spec(std::istream& in,
                                                      const std::string& base_dir = "") {
    std::vector<QuantileFunction> models;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string text = detail::strip(line);
        if (text.empty() || text[0] == '#') continue;
        std::istringstream row(text);
        std::string kind;
        row >> kind;
        auto need = [&](int count) {
            std::vector<double> vals(count);
            for (int i = 0; i < count; ++i)
                if (!(row >> vals[i]))
                    throw data_format_error("model spec line " + std::to_string(line_no) +
                                            ": expected " + std::to_string(count) +
                                            " numeric parameters after '" + kind + "'");
            std::string extra;
            if (row >> extra)
                throw data_format_error("model spec line " + std::to_string(line_no) +
                                        ": unexpected trailing '" + extra + "'");
            return vals;
        };
        try {
            if (kind == "normal") {
                const auto v = need(2);
                models.push_back(QuantileFunction::normal(v[0], v[1]));
            } else if (kind == "weibull") {
                const auto v = need(2);
                models.push_back(QuantileFunction::weibull(v[0], v[1]));
            } else if (kind == "exponential") {
                const auto v = need(1);
                models.push_back(QuantileFunction::exponential(v[0]));
            } else if (kind == "uniform") {
                const auto v = need(2);
                models.push_back(QuantileFunction::uniform(v[0], v[1]));
            } else if (kind == "pointmass") {
                const auto v = need(1);
                models.push_back(QuantileFunction::point_mass(v[0]));
            } else if (kind == "sample") {
                std::string path;
                if (!(row >> path))
                    throw data_format_error("model spec line " + std::to_string(line_no) +
                                            ": expected a path after 'sample'");
                const std::string full =
                    (!base_dir.empty() && path.front() != '/') ? base_dir + "/" + path : path;
                std::ifstream sample_in(full);
                if (!sample_in)
                    throw data_format_error("model spec line " + std::to_string(line_no) +
                                            ": cannot open sample file '" + full + "'");
                std::vector<double> sample;
                std::string sline;
                while (std::getline(sample_in, sline)) {
                    const std::string s = detail::strip(sline);
                    if (s.empty() || s[0] == '#') continue;
                    sample.push_back(std::stod(s));
                }
                models.push_back(empirical_quantile(sample));
            } else {
                throw data_format_error("model spec line " + std::to_string(line_no) +
                                        ": unknown model kind '" + kind + "'");
            }
        } catch (const invalid_input_error& e) {
            throw data_format_error("model spec line " + std::to_string(line_no) + ": " +
                                    e.what());
        } catch (const std::invalid_argument&) {
            throw data_format_error("model spec line " + std::to_string(line_no) +
                                    ": non-numeric value");
        }
    }
    if (models.empty()) throw data_format_error("model spec: no models");
    return models;
}

/// Plain sample file: one positive-or-any finite value per line.
inline std::vector<double> load_sample(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_format_error("sample file: cannot open '" + path + "'");
    std::vector<double> sample;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string s = detail::strip(line);
        if (s.empty() || s[0] == '#') continue;
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            sample.push_back(v);
        } catch (const std::exception&) {
            throw data_format_error("sample file line " + std::to_string(line_no) +
                                    ": non-numeric value '" + s + "'");
        }
    }
    if (sample.empty()) throw data_format_error("sample file: no values in '" + path + "'");
    return sample;
}

// ---------------------------------------------------------------------------
// Experiment report
// ---------------------------------------------------------------------------

inline void write_experiment_csv(const ExperimentReport& report, std::ostream& out) {
    out << "family,J,n,B,method,mean_w2,se_w2,mean_dw,std_dw,mean_lambda,mean_alpha\n";
    const auto& c = report.config;
    for (const auto& row : report.rows) {
        out << to_string(c.family) << ',' << c.num_models << ',' << c.sample_size << ','
            << c.replications << ',' << to_string(row.method) << ','
            << format_double(row.mean_w2) << ',' << format_double(row.se_w2) << ',';
        out << (row.mean_dw ? format_double(*row.mean_dw) : "") << ','
            << (row.std_dw ? format_double(*row.std_dw) : "") << ','
            << (row.mean_lambda ? format_double(*row.mean_lambda) : "") << ','
            << (row.mean_alpha ? format_double(*row.mean_alpha) : "") << '\n';
    }
}

inline nlohmann::ordered_json experiment_report_json(const ExperimentReport& report) {
    nlohmann::ordered_json j;
    const auto& c = report.config;
    j["config"] = {{"family", to_string(c.family)},
                   {"J", c.num_models},
                   {"n", c.sample_size},
                   {"B", c.replications},
                   {"seed", c.seed},
                   {"grid_nodes", c.grid.size()},
                   {"grid_trim", c.grid.trim()}};
    if (c.family == Family::normal)
        j["config"]["noise"] = {{"c", c.normal_noise.c}, {"a", c.normal_noise.a},
                                {"b", c.normal_noise.b}};
    else
        j["config"]["noise"] = {{"a1", c.weibull_noise.a1}, {"b1", c.weibull_noise.b1},
                                {"a2", c.weibull_noise.a2}, {"b2", c.weibull_noise.b2}};
    j["dropped_replications"] = report.dropped_replications;
    j["methods"] = nlohmann::ordered_json::array();
    for (const auto& row : report.rows) {
        nlohmann::ordered_json m{{"method", to_string(row.method)},
                                 {"mean_w2", row.mean_w2},
                                 {"se_w2", row.se_w2}};
        if (row.mean_dw) m["mean_dw"] = *row.mean_dw;
        if (row.std_dw) m["std_dw"] = *row.std_dw;
        if (row.mean_lambda) m["mean_lambda"] = *row.mean_lambda;
        if (row.mean_alpha) m["mean_alpha"] = *row.mean_alpha;
        j["methods"].push_back(std::move(m));
    }
    return j;
}

// ---------------------------------------------------------------------------
// Fit result
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json fit_result_json(const FitResult& fit, double lambda, double alpha) {
    nlohmann::ordered_json j;
    j["weights"] = fit.weights.values();
    j["objective"] = fit.objective;
    j["lambda"] = lambda;
    j["alpha"] = alpha;
    j["active_set"] = fit.active_set;
    j["iterations"] = fit.iterations;
    j["converged"] = fit.converged;
    return j;
}

// ---------------------------------------------------------------------------
// Risk report
// ---------------------------------------------------------------------------

inline void write_risk_csv(const RiskReport& report, std::ostream& out) {
    out << "level,var,es\n";
    for (std::size_t i = 0; i < report.levels.size(); ++i)
        out << format_double(report.levels[i]) << ',' << format_double(report.var[i]) << ','
            << format_double(report.es[i]) << '\n';
}

// ---------------------------------------------------------------------------
// Sequential outputs
// ---------------------------------------------------------------------------

/// Weight matrix: one row per validation period, one column per history
/// period. Exact zeros print blank (the tables' "." convention) unless
/// numeric_zeros is set; periods not yet observed stay empty either way.
inline void write_sequential_weights_csv(const SequentialRun& run, std::ostream& out,
                                         bool numeric_zeros = false) {
    out << "period";
    const std::size_t width = run.period_labels.empty() ? 0 : run.period_labels.size() - 1;
    for (std::size_t i = 0; i < width; ++i) out << ',' << run.period_labels[i];
    out << ",lambda,alpha\n";
    for (const auto& rec : run.records) {
        out << rec.label;
        for (std::size_t i = 0; i < width; ++i) {
            out << ',';
            if (i >= rec.fit_weights.size()) continue;  // not yet observed then
            const double w = rec.fit_weights[i];
            if (w == 0.0 && !numeric_zeros) continue;   // blank for zero
            out << format_double(w);
        }
        out << ',' << format_double(rec.lambda) << ',' << format_double(rec.alpha) << '\n';
    }
}

/// Extended weights (1-delta rescale plus the delta share): the weights the
/// one-step-ahead prediction actually uses. Columns cover every period that
/// can carry weight, i.e. all but the final one.
inline void write_sequential_extended_weights_csv(const SequentialRun& run, std::ostream& out,
                                                  bool numeric_zeros = false) {
    out << "period";
    for (const auto& label : run.period_labels) out << ',' << label;
    out << '\n';
    for (const auto& rec : run.records) {
        out << rec.label;
        for (std::size_t i = 0; i < run.period_labels.size(); ++i) {
            out << ',';
            if (i >= rec.extended_weights.size()) continue;
            const double w = rec.extended_weights[i];
            if (w == 0.0 && !numeric_zeros) continue;
            out << format_double(w);
        }
        out << '\n';
    }
}

inline void write_sequential_risk_csv(const SequentialRun& run, std::ostream& out) {
    out << "period,kind,level,var,es\n";
    auto emit = [&](const std::string& label, const char* kind, const RiskReport& r) {
        for (std::size_t i = 0; i < r.levels.size(); ++i)
            out << label << ',' << kind << ',' << format_double(r.levels[i]) << ','
                << format_double(r.var[i]) << ',' << format_double(r.es[i]) << '\n';
    };
    for (const auto& rec : run.records) {
        emit(rec.label, "fitted", rec.fitted_risk);
        emit(rec.label, "predicted", rec.predicted_risk);
        emit(rec.label, "realized", rec.realized_risk);
    }
}

// ---------------------------------------------------------------------------
// Flat key-value configuration files
// ---------------------------------------------------------------------------

/// `key = value` lines with section-prefixed keys (grid.nodes, penalty.lambda,
/// ...). Unknown keys are rejected against the allowed set. Values from
/// command-line flags override file values.
inline std::map<std::string, std::string> parse_config_file(
    std::istream& in, const std::set<std::string>& allowed_keys) {
    std::map<std::string, std::string> config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string text = detail::strip(line);
        if (text.empty() || text[0] == '#') continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw config_error("config line " + std::to_string(line_no) +
                               ": expected 'key = value'");
        const std::string key = detail::strip(text.substr(0, eq));
        const std::string value = detail::strip(text.substr(eq + 1));
        if (allowed_keys.find(key) == allowed_keys.end())
            throw config_error("config line " + std::to_string(line_no) + ": unknown key '" +
                               key + "'");
        if (value.empty())
            throw config_error("config line " + std::to_string(line_no) + ": empty value for '" +
                               key + "'");
        config[key] = value;
    }
    return config;
}

inline std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        const std::string s = detail::strip(token);
        if (s.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(s, &used));
            if (used != s.size()) throw std::invalid_argument(s);
        } catch (const std::exception&) {
            throw config_error(what + ": non-numeric entry '" + s + "'");
        }
    }
    if (out.empty()) throw config_error(what + ": empty list");
    return out;
}

}  // namespace wbar
