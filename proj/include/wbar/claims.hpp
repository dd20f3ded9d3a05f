#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "wbar/errors.hpp"

namespace wbar {

struct ClaimsPeriod {
    std::string label;
    std::vector<double> losses;
};

/// Per-period positive losses, periods ordered by label.
struct ClaimsPanel {
    std::vector<ClaimsPeriod> periods;

    std::size_t size() const { return periods.size(); }

    void validate() const {
        if (periods.empty()) throw invalid_input_error("ClaimsPanel: no periods");
        for (std::size_t i = 0; i < periods.size(); ++i) {
            if (periods[i].losses.empty())
                throw invalid_input_error("ClaimsPanel: empty period " + periods[i].label);
            if (i > 0 && !(periods[i - 1].label < periods[i].label))
                throw invalid_input_error("ClaimsPanel: period labels not unique/ordered");
            for (double x : periods[i].losses)
                if (!(x > 0.0) || !std::isfinite(x))
                    throw invalid_input_error("ClaimsPanel: nonpositive loss in period " +
                                              periods[i].label);
        }
    }
};

namespace detail {

inline std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Parse a claims CSV with header `period,loss`, one row per claim. Rows are
/// grouped by period and periods sorted by label. Errors carry 1-based line
/// numbers.
inline ClaimsPanel load_claims(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw data_format_error("claims CSV: empty file");
    {
        std::string header = detail::strip(line);
        std::string squashed;
        for (char c : header)
            if (c != ' ' && c != '\t') squashed += c;
        if (squashed != "period,loss")
            throw data_format_error("claims CSV: expected header 'period,loss', got '" + header +
                                    "'");
    }
    std::map<std::string, std::vector<double>> groups;
    std::size_t line_no = 1;
    bool any = false;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string row = detail::strip(line);
        if (row.empty()) continue;
        const auto comma = row.find(',');
        if (comma == std::string::npos)
            throw data_format_error("claims CSV line " + std::to_string(line_no) +
                                    ": expected 'period,loss'");
        const std::string period = detail::strip(row.substr(0, comma));
        const std::string loss_text = detail::strip(row.substr(comma + 1));
        if (period.empty())
            throw data_format_error("claims CSV line " + std::to_string(line_no) +
                                    ": empty period label");
        std::size_t consumed = 0;
        double loss = 0.0;
        try {
            loss = std::stod(loss_text, &consumed);
        } catch (const std::exception&) {
            throw data_format_error("claims CSV line " + std::to_string(line_no) +
                                    ": non-numeric loss '" + loss_text + "'");
        }
        if (consumed != loss_text.size())
            throw data_format_error("claims CSV line " + std::to_string(line_no) +
                                    ": non-numeric loss '" + loss_text + "'");
        if (!(loss > 0.0) || !std::isfinite(loss))
            throw data_format_error("claims CSV line " + std::to_string(line_no) +
                                    ": loss must be a positive finite number");
        groups[period].push_back(loss);
        any = true;
    }
    if (!any) throw data_format_error("claims CSV: no claim rows");
    ClaimsPanel panel;
    for (auto& [label, losses] : groups) panel.periods.push_back({label, std::move(losses)});
    panel.validate();
    return panel;
}

inline ClaimsPanel load_claims(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_format_error("claims CSV: cannot open '" + path + "'");
    return load_claims(in);
}

inline void write_claims(const ClaimsPanel& panel, std::ostream& out) {
    out << "period,loss\n";
    for (const auto& period : panel.periods) {
        std::ostringstream row;
        for (double loss : period.losses) {
            row.str("");
            row.precision(17);
            row << period.label << ',' << loss << '\n';
            out << row.str();
        }
    }
}

}  // namespace wbar
