#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "plant3d/dataset.hpp"
#include "plant3d/experiment.hpp"

namespace plant3d {

enum class ReportFormat { Csv, Markdown };

inline ReportFormat report_format_from_string(const std::string& s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  fail(ErrorKind::InvalidArgument, "unknown report format '" + s + "'");
}

inline constexpr const char* kCsvHeader = "pair,fv_condition,fv_stage,vlad_condition,vlad_stage";

/// "88.89", "88.89 +/- 1.20" for repeated runs, "skipped", or "-" when the
/// cell was not requested.
inline std::string format_cell(const Cell& c) {
  switch (c.state) {
    case Cell::State::NotRun: return "-";
    case Cell::State::Skipped: return "skipped";
    case Cell::State::Done: break;
  }
  char buf[64];
  if (c.n > 1) {
    std::snprintf(buf, sizeof buf, "%.2f +/- %.2f", c.mean, c.sd);
  } else {
    std::snprintf(buf, sizeof buf, "%.2f", c.mean);
  }
  return buf;
}

inline Cell parse_cell(const std::string& text) {
  const std::string s = detail::trim(text);
  Cell c;
  if (s == "-") return c;
  if (s == "skipped") {
    c.state = Cell::State::Skipped;
    return c;
  }
  c.state = Cell::State::Done;
  c.n = 1;
  std::size_t used = 0;
  try {
    c.mean = std::stod(s, &used);
    const auto pm = s.find("+/-", used);
    if (pm != std::string::npos) {
      c.sd = std::stod(s.substr(pm + 3));
      c.n = 2;
    } else if (detail::trim(s.substr(used)) != "") {
      fail(ErrorKind::ParseError, "bad report cell '" + s + "'");
    }
  } catch (const std::logic_error&) {
    fail(ErrorKind::ParseError, "bad report cell '" + s + "'");
  }
  return c;
}

inline std::string emit_csv(const AccuracyTable& t) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (std::size_t r = 0; r < kPairOrder.size(); ++r) {
    out << pair_label(kPairOrder[r]);
    for (const auto& c : t.cells[r]) out << ',' << format_cell(c);
    out << '\n';
  }
  out << "# table: " << t.name << '\n';
  for (const auto& [k, v] : t.metadata) out << "# " << k << ": " << v << '\n';
  return out.str();
}

inline std::string emit_markdown(const AccuracyTable& t) {
  std::ostringstream out;
  out << "### " << t.name << "\n\n";
  out << "| Pair | Accuracy (FV) condition | Accuracy (FV) stage | Accuracy (VLAD) condition | Accuracy (VLAD) stage |\n";
  out << "|---|---:|---:|---:|---:|\n";
  for (std::size_t r = 0; r < kPairOrder.size(); ++r) {
    out << "| " << pair_label(kPairOrder[r]);
    for (const auto& c : t.cells[r]) out << " | " << format_cell(c);
    out << " |\n";
  }
  out << '\n';
  for (const auto& [k, v] : t.metadata) out << "<!-- " << k << ": " << v << " -->\n";
  return out.str();
}

inline std::string emit_report(const std::vector<AccuracyTable>& tables, ReportFormat format) {
  std::string out;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    if (i) out += '\n';
    out += format == ReportFormat::Csv ? emit_csv(tables[i]) : emit_markdown(tables[i]);
  }
  return out;
}

inline std::string emit_report(const AccuracyTable& table, ReportFormat format) {
  return emit_report(std::vector<AccuracyTable>{table}, format);
}

/// Inverse of emit_csv for one or more concatenated tables.
inline std::vector<AccuracyTable> parse_report_csv(const std::string& text) {
  std::vector<AccuracyTable> tables;
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line == kCsvHeader) {
      tables.emplace_back();
      row = 0;
      continue;
    }
    if (tables.empty()) fail(ErrorKind::ParseError, "report line " + std::to_string(line_no) + ": expected header");
    auto& t = tables.back();
    if (line[0] == '#') {
      const auto colon = line.find(": ");
      if (colon == std::string::npos) continue;
      const std::string key = detail::trim(line.substr(1, colon - 1));
      const std::string value = line.substr(colon + 2);
      if (key == "table") {
        t.name = value;
      } else {
        t.metadata.emplace_back(key, value);
      }
      continue;
    }
    const auto fields = detail::split_csv_line(line);
    if (row >= kPairOrder.size() || fields.size() != 5 || fields[0] != pair_label(kPairOrder[row])) {
      fail(ErrorKind::ParseError, "report line " + std::to_string(line_no) + ": unexpected row '" + line + "'");
    }
    for (std::size_t c = 0; c < 4; ++c) t.cells[row][c] = parse_cell(fields[c + 1]);
    ++row;
  }
  return tables;
}

struct TrendCheck {
  bool evaluable = false;
  bool passed = false;
  std::string detail;
};

/// Dataset trend expected of a real manifest: mean condition accuracy (over
/// the FV and VLAD columns) of ISS-SHOT and of SIFT-SIFT each at least 10
/// points above Harris-SHOT, and the table's mean condition accuracy at
/// least its mean stage accuracy.
inline TrendCheck check_trends(const AccuracyTable& t) {
  TrendCheck out;
  auto condition_mean = [&](std::size_t row, bool& ok) {
    const Cell& fv = t.cells[row][0];
    const Cell& vlad = t.cells[row][2];
    std::vector<double> v;
    if (fv.state == Cell::State::Done) v.push_back(fv.mean);
    if (vlad.state == Cell::State::Done) v.push_back(vlad.mean);
    ok = !v.empty();
    double s = 0.0;
    for (const double x : v) s += x;
    return ok ? s / static_cast<double>(v.size()) : 0.0;
  };
  bool ok_h = false, ok_i = false, ok_s = false;
  const double harris = condition_mean(0, ok_h);
  const double iss = condition_mean(1, ok_i);
  const double sift = condition_mean(5, ok_s);
  double cond = 0.0, stage = 0.0;
  std::size_t nc = 0, ns = 0;
  for (const auto& row : t.cells) {
    for (std::size_t c = 0; c < 4; ++c) {
      if (row[c].state != Cell::State::Done) continue;
      if (kColumnOrder[c].task == Task::Condition) {
        cond += row[c].mean;
        ++nc;
      } else {
        stage += row[c].mean;
        ++ns;
      }
    }
  }
  out.evaluable = ok_h && ok_i && ok_s && nc > 0 && ns > 0;
  if (!out.evaluable) {
    out.detail = "missing cells: need Harris-SHOT, ISS-SHOT, SIFT-SIFT condition and at least one stage cell";
    return out;
  }
  cond /= static_cast<double>(nc);
  stage /= static_cast<double>(ns);
  char buf[256];
  std::snprintf(buf, sizeof buf, "ISS-SHOT %.2f, SIFT-SIFT %.2f, Harris-SHOT %.2f; condition mean %.2f, stage mean %.2f",
                iss, sift, harris, cond, stage);
  out.detail = buf;
  out.passed = iss - harris >= 10.0 && sift - harris >= 10.0 && cond >= stage;
  return out;
}

}  // namespace plant3d
