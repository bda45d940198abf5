#include "pathfx/csv.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace pathfx {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  return s.substr(b);
}

std::optional<double> parse_cell(const std::string& raw, std::size_t row, const std::string& col) {
  const std::string s = strip(raw);
  if (s.empty() || s == "NA" || s == "na") return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    // from_chars rejects "inf"/"nan" spellings the validator should see as non-finite
    if (s == "nan" || s == "NaN" || s == "inf" || s == "-inf" || s == "Inf" || s == "-Inf")
      return std::stod(s);
    throw DataError("row " + std::to_string(row) + ": cannot parse '" + s + "' in column " + col);
  }
  return v;
}

int parse_index(const std::string& name, const std::string& prefix) {
  const std::string rest = name.substr(prefix.size());
  int j = 0;
  auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), j);
  if (ec != std::errc() || ptr != rest.data() + rest.size() || j < 1) return -1;
  return j;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

Dataset read_csv(std::istream& in, const CsvOptions& opts) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty input: missing header");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  const auto header = split(line);

  std::map<int, std::size_t> c0_cols, c1_cols;
  std::optional<std::size_t> e_col, m_col, y_col;
  for (std::size_t k = 0; k < header.size(); ++k) {
    const std::string name = strip(header[k]);
    auto dup = [&](bool taken) {
      if (taken) throw DataError("duplicate header column '" + name + "'");
    };
    if (name == "e") {
      dup(e_col.has_value());
      e_col = k;
    } else if (name == "m") {
      dup(m_col.has_value());
      m_col = k;
    } else if (name == "y") {
      dup(y_col.has_value());
      y_col = k;
    } else if (name.rfind("c0_", 0) == 0 && parse_index(name, "c0_") > 0) {
      int j = parse_index(name, "c0_");
      dup(c0_cols.count(j) > 0);
      c0_cols[j] = k;
    } else if (name.rfind("c1_", 0) == 0 && parse_index(name, "c1_") > 0) {
      int j = parse_index(name, "c1_");
      dup(c1_cols.count(j) > 0);
      c1_cols[j] = k;
    } else if (!opts.ignore_extra) {
      throw DataError("unexpected column '" + name + "' (use --ignore-extra to skip it)");
    }
  }
  if (!e_col || !m_col || !y_col) throw DataError("header must contain columns e, m and y");
  auto contiguous = [](const std::map<int, std::size_t>& cols, const char* what) {
    int expect = 1;
    for (const auto& [j, k] : cols) {
      (void)k;
      if (j != expect) throw DataError(std::string("header: ") + what + " columns must be numbered 1..d");
      ++expect;
    }
  };
  contiguous(c0_cols, "c0");
  contiguous(c1_cols, "c1");
  const int d0 = static_cast<int>(c0_cols.size());
  const int d1 = static_cast<int>(c1_cols.size());

  std::vector<RawRow> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (strip(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(cells.size()));
    RawRow r;
    for (const auto& [j, k] : c0_cols) r.c0.push_back(parse_cell(cells[k], row, "c0_" + std::to_string(j)));
    for (const auto& [j, k] : c1_cols) r.c1.push_back(parse_cell(cells[k], row, "c1_" + std::to_string(j)));
    r.e = parse_cell(cells[*e_col], row, "e");
    r.m = parse_cell(cells[*m_col], row, "m");
    r.y = parse_cell(cells[*y_col], row, "y");
    rows.push_back(std::move(r));
    ++row;
  }
  return validate_dataset(rows, d0, d1);
}

Dataset read_csv_file(const std::string& path, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_csv(in, opts);
}

void write_csv(std::ostream& out, const Dataset& data) {
  for (int j = 0; j < data.d0(); ++j) out << "c0_" << j + 1 << ',';
  out << 'e';
  for (int j = 0; j < data.d1(); ++j) out << ",c1_" << j + 1;
  out << ",m,y\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.d0(); ++j) out << format_double(data.c0()(i, j)) << ',';
    out << data.e()(i);
    for (int j = 0; j < data.d1(); ++j) out << ',' << format_double(data.c1()(i, j));
    out << ',' << format_double(data.m()(i)) << ',' << format_double(data.y()(i)) << '\n';
  }
}

void write_csv_file(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_csv(out, data);
}

}  // namespace pathfx
