#pragma once

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

namespace torusmix {

/*
 * One measurement row: an estimate with its Monte Carlo standard error, the
 * theoretical bound or target it is compared against, the fitted envelope
 * constant when the comparison is an envelope fit, and the pass flag.
 */
struct ResultRow {
  std::string experiment;
  std::string params;
  double estimate = 0.0;
  double std_error = 0.0;
  double theory = 0.0;
  double fitted_c = 0.0;
  bool pass = true;
};

namespace detail {

inline std::string csv_escape(const std::string& s) {
  bool needs_quote = s.find_first_of(",\"\r\n") != std::string::npos;
  if (!needs_quote) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

struct ResultTable {
  std::vector<ResultRow> rows;

  void add(std::string experiment, std::string params, double estimate,
           double std_error, double theory, double fitted_c, bool pass) {
    rows.push_back({std::move(experiment), std::move(params), estimate,
                    std_error, theory, fitted_c, pass});
  }

  void append(const ResultTable& other) {
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  }

  bool all_pass() const {
    for (const ResultRow& r : rows)
      if (!r.pass) return false;
    return true;
  }

  /* RFC 4180: CRLF line ends, quoted fields where needed. */
  std::string to_csv() const {
    std::string out =
        "experiment,params,estimate,std_error,theory,fitted_c,pass\r\n";
    for (const ResultRow& r : rows) {
      out += detail::csv_escape(r.experiment);
      out += ',';
      out += detail::csv_escape(r.params);
      out += ',';
      out += detail::csv_number(r.estimate);
      out += ',';
      out += detail::csv_number(r.std_error);
      out += ',';
      out += detail::csv_number(r.theory);
      out += ',';
      out += detail::csv_number(r.fitted_c);
      out += ',';
      out += r.pass ? "true" : "false";
      out += "\r\n";
    }
    return out;
  }
};

}  // namespace torusmix
