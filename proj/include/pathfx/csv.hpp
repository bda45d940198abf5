#ifndef PATHFX_CSV_HPP
#define PATHFX_CSV_HPP

#include "pathfx/core.hpp"

#include <iosfwd>
#include <string>

namespace pathfx {

struct CsvOptions {
  bool ignore_extra = false;
};

/// Reads the `c0_1..c0_d0, e, c1_1..c1_d1, m, y` schema. Dimensions come from the header;
/// column order is free. Errors carry the 0-based data row index.
Dataset read_csv(std::istream& in, const CsvOptions& opts = {});
Dataset read_csv_file(const std::string& path, const CsvOptions& opts = {});

void write_csv(std::ostream& out, const Dataset& data);
void write_csv_file(const std::string& path, const Dataset& data);

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace pathfx

#endif  // PATHFX_CSV_HPP
