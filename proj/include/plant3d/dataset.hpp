#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "plant3d/error.hpp"

namespace plant3d {

enum class Condition { Control, Heat, Shade };
enum class Stage { Stage1, Stage2, Stage3 };

inline std::string to_string(Condition c) {
  switch (c) {
    case Condition::Control: return "control";
    case Condition::Heat: return "heat";
    case Condition::Shade: return "shade";
  }
  return "?";
}

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::Stage1: return "stage1";
    case Stage::Stage2: return "stage2";
    case Stage::Stage3: return "stage3";
  }
  return "?";
}

inline Condition condition_from_string(const std::string& s) {
  if (s == "control") return Condition::Control;
  if (s == "heat") return Condition::Heat;
  if (s == "shade") return Condition::Shade;
  fail(ErrorKind::UnknownCondition, "'" + s + "' is not one of control, heat, shade");
}

struct ManifestRecord {
  std::string path;
  std::string species;
  Condition condition = Condition::Control;
  int replicate = 1;
  int day = 0;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

/// Comma-separated fields; double quotes group a field and "" is a literal
/// quote.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline bool parse_int(const std::string& s, int& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace detail

/// Parses manifest CSV text. Columns are matched by header name in any
/// order; relative paths resolve against `base_dir`.
inline std::vector<ManifestRecord> parse_manifest(const std::string& text, const std::string& source = "<manifest>",
                                                  const std::filesystem::path& base_dir = {}) {
  static const std::array<std::string, 5> kColumns = {"path", "species", "condition", "replicate", "day"};
  std::vector<ManifestRecord> out;
  std::map<std::string, std::size_t> col;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    const std::string line = detail::trim(std::string_view(text).substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') {
      if (end == text.size()) break;
      continue;
    }
    const auto fields = detail::split_csv_line(line);
    auto where = [&](const std::string& column) {
      return source + ":" + std::to_string(line_no) + ": column '" + column + "': ";
    };
    if (!have_header) {
      for (std::size_t i = 0; i < fields.size(); ++i) col[fields[i]] = i;
      for (const auto& c : kColumns) {
        if (!col.contains(c)) fail(ErrorKind::ParseError, source + ":" + std::to_string(line_no) + ": missing header column '" + c + "'");
      }
      have_header = true;
    } else {
      if (fields.size() < col.size()) {
        fail(ErrorKind::ParseError, source + ":" + std::to_string(line_no) + ": expected " + std::to_string(col.size()) +
                                        " fields, got " + std::to_string(fields.size()));
      }
      ManifestRecord r;
      r.path = fields[col["path"]];
      if (r.path.empty()) fail(ErrorKind::ParseError, where("path") + "empty path");
      if (!base_dir.empty() && std::filesystem::path(r.path).is_relative()) r.path = (base_dir / r.path).string();
      r.species = fields[col["species"]];
      if (r.species.empty()) fail(ErrorKind::ParseError, where("species") + "empty species");
      try {
        r.condition = condition_from_string(fields[col["condition"]]);
      } catch (const Error& e) {
        fail(ErrorKind::UnknownCondition, where("condition") + e.what());
      }
      if (!detail::parse_int(fields[col["replicate"]], r.replicate) || r.replicate < 1) {
        fail(ErrorKind::ParseError, where("replicate") + "expected an integer >= 1, got '" + fields[col["replicate"]] + "'");
      }
      if (!detail::parse_int(fields[col["day"]], r.day) || r.day < 0) {
        fail(ErrorKind::ParseError, where("day") + "expected an integer >= 0, got '" + fields[col["day"]] + "'");
      }
      out.push_back(std::move(r));
    }
    if (end == text.size()) break;
  }
  if (!have_header) fail(ErrorKind::ParseError, source + ": missing header");
  return out;
}

inline std::vector<ManifestRecord> load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::NotFound, path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_manifest(text, path, std::filesystem::path(path).parent_path());
}

/// Per species, the sorted distinct days split into three consecutive
/// groups by rank; group sizes differ by at most one and the larger groups
/// come first.
inline std::vector<Stage> assign_stages(const std::vector<ManifestRecord>& records) {
  std::map<std::string, std::set<int>> days;
  for (const auto& r : records) days[r.species].insert(r.day);
  std::map<std::string, std::map<int, Stage>> stage_of;
  for (const auto& [species, ds] : days) {
    if (ds.size() < 3) {
      fail(ErrorKind::TooFewDays, "species '" + species + "' has " + std::to_string(ds.size()) + " distinct days, need 3");
    }
    const std::size_t base = ds.size() / 3, rem = ds.size() % 3;
    const std::size_t first = base + (rem > 0 ? 1 : 0);
    const std::size_t second = first + base + (rem > 1 ? 1 : 0);
    std::size_t rank = 0;
    for (const int d : ds) {
      stage_of[species][d] = rank < first ? Stage::Stage1 : rank < second ? Stage::Stage2 : Stage::Stage3;
      ++rank;
    }
  }
  std::vector<Stage> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(stage_of[r.species][r.day]);
  return out;
}

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified seeded split over item labels. Per class of size n,
/// floor(ratio * n) items (clamped to [1, n - 1]) go to train. Output
/// indices are ascending.
inline SplitIndices stratified_split(const std::vector<std::string>& labels, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) fail(ErrorKind::InvalidArgument, "train ratio must lie in (0, 1)");
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  SplitIndices out;
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2) {
      fail(ErrorKind::ClassTooSmall, "class '" + label + "' has " + std::to_string(idx.size()) + " item(s), need 2");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = idx.size();
    const std::size_t n_train = std::clamp<std::size_t>(static_cast<std::size_t>(ratio * static_cast<double>(n) + 1e-9), 1, n - 1);
    out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.insert(out.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

}  // namespace plant3d
