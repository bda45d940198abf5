#include "pathfx/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace pathfx {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

double column_value(const Dataset& d, Eigen::Index i, const ColumnRef& r, const Overrides& o) {
  switch (r.column) {
    case Column::C0:
      return d.c0()(i, r.index);
    case Column::E:
      return o.e ? *o.e : static_cast<double>(d.e()(i));
    case Column::C1:
      return o.c1 ? (*o.c1)(r.index) : d.c1()(i, r.index);
    case Column::M:
      return o.m ? *o.m : d.m()(i);
  }
  return 0.0;
}

double column_value(const Record& rec, const ColumnRef& r, const Overrides& o) {
  switch (r.column) {
    case Column::C0:
      if (r.index >= rec.c0.size()) throw ConfigError("unresolvable column " + to_string(r));
      return rec.c0(r.index);
    case Column::E:
      return o.e ? *o.e : static_cast<double>(rec.e);
    case Column::C1: {
      const Eigen::VectorXd& c1 = o.c1 ? *o.c1 : rec.c1;
      if (r.index >= c1.size()) throw ConfigError("unresolvable column " + to_string(r));
      return c1(r.index);
    }
    case Column::M:
      return o.m ? *o.m : rec.m;
  }
  return 0.0;
}

template <class Lookup>
double term_value(const Term& t, Lookup&& value) {
  switch (t.kind) {
    case Term::Kind::Intercept:
      return 1.0;
    case Term::Kind::Covariate:
      return value(t.a);
    case Term::Kind::Square: {
      double v = value(t.a);
      return v * v;
    }
    case Term::Kind::Product:
      return value(t.a) * value(t.b);
  }
  return 0.0;
}

}  // namespace

Dataset::Dataset(Eigen::MatrixXd c0, Eigen::VectorXi e, Eigen::MatrixXd c1, Eigen::VectorXd m,
                 Eigen::VectorXd y)
    : c0_(std::move(c0)), e_(std::move(e)), c1_(std::move(c1)), m_(std::move(m)), y_(std::move(y)) {
  const auto n = e_.size();
  if (c0_.rows() != n || c1_.rows() != n || m_.size() != n || y_.size() != n)
    throw DataError("dataset columns have inconsistent lengths");
  for (Eigen::Index i = 0; i < n; ++i) levels_.insert(e_(i));
}

Record Dataset::record(Eigen::Index i) const {
  return Record{c0_.row(i).transpose(), e_(i), c1_.row(i).transpose(), m_(i), y_(i)};
}

Dataset Dataset::select(const std::vector<Eigen::Index>& rows) const {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd c0(n, d0()), c1(n, d1());
  Eigen::VectorXi e(n);
  Eigen::VectorXd m(n), y(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = rows[static_cast<std::size_t>(k)];
    c0.row(k) = c0_.row(i);
    c1.row(k) = c1_.row(i);
    e(k) = e_(i);
    m(k) = m_(i);
    y(k) = y_(i);
  }
  return Dataset(std::move(c0), std::move(e), std::move(c1), std::move(m), std::move(y));
}

Dataset Dataset::with_outcome(Eigen::VectorXd y) const {
  return Dataset(c0_, e_, c1_, m_, std::move(y));
}

Term Term::product(ColumnRef x, ColumnRef y) {
  if (x == y) return square(x);
  if (y < x) std::swap(x, y);
  return {Kind::Product, x, y};
}

bool Term::involves(Column c) const {
  switch (kind) {
    case Kind::Intercept:
      return false;
    case Kind::Covariate:
    case Kind::Square:
      return a.column == c;
    case Kind::Product:
      return a.column == c || b.column == c;
  }
  return false;
}

DesignSpec::DesignSpec(std::vector<Term> terms) : terms_(std::move(terms)) {
  if (terms_.empty()) throw ConfigError("design has no terms");
  for (std::size_t i = 0; i < terms_.size(); ++i)
    for (std::size_t j = i + 1; j < terms_.size(); ++j)
      if (terms_[i] == terms_[j]) throw ConfigError("duplicate design term " + to_string(terms_[i]));
}

bool DesignSpec::has_intercept() const { return has_term(Term::intercept()); }

bool DesignSpec::has_term(const Term& t) const {
  return std::find(terms_.begin(), terms_.end(), t) != terms_.end();
}

void DesignSpec::check_dimensions(int d0, int d1) const {
  auto check = [&](const ColumnRef& r) {
    if ((r.column == Column::C0 && r.index >= d0) || (r.column == Column::C1 && r.index >= d1))
      throw ConfigError("unresolvable column " + to_string(r) + " (d0=" + std::to_string(d0) +
                        ", d1=" + std::to_string(d1) + ")");
  };
  for (const auto& t : terms_) {
    if (t.kind == Term::Kind::Intercept) continue;
    check(t.a);
    if (t.kind == Term::Kind::Product) check(t.b);
  }
}

Dataset validate_dataset(const std::vector<RawRow>& rows, int d0, int d1) {
  if (rows.empty()) throw DataError("empty input: no rows");
  if (d0 < 0 || d1 < 0) throw DataError("negative dimension");
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd c0(n, d0), c1(n, d1);
  Eigen::VectorXi e(n);
  Eigen::VectorXd m(n), y(n);

  auto take = [](const std::optional<double>& v, std::size_t row, const std::string& col) {
    if (!v) throw DataError("row " + std::to_string(row) + ": missing field " + col);
    if (!std::isfinite(*v))
      throw DataError("row " + std::to_string(row) + ": non-finite value in column " + col);
    return *v;
  };

  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto i = static_cast<Eigen::Index>(r);
    if (static_cast<int>(row.c0.size()) != d0)
      throw DataError("row " + std::to_string(r) + ": dimension mismatch, c0 has " +
                      std::to_string(row.c0.size()) + " components, expected " + std::to_string(d0));
    if (static_cast<int>(row.c1.size()) != d1)
      throw DataError("row " + std::to_string(r) + ": dimension mismatch, c1 has " +
                      std::to_string(row.c1.size()) + " components, expected " + std::to_string(d1));
    for (int j = 0; j < d0; ++j) c0(i, j) = take(row.c0[j], r, "c0_" + std::to_string(j + 1));
    for (int j = 0; j < d1; ++j) c1(i, j) = take(row.c1[j], r, "c1_" + std::to_string(j + 1));
    const double ev = take(row.e, r, "e");
    if (ev < 0 || ev != std::floor(ev) || ev > 1e9)
      throw DataError("row " + std::to_string(r) + ": column e must be a non-negative integer");
    e(i) = static_cast<int>(ev);
    m(i) = take(row.m, r, "m");
    y(i) = take(row.y, r, "y");
  }
  return Dataset(std::move(c0), std::move(e), std::move(c1), std::move(m), std::move(y));
}

Dataset restrict_to_pair(const Dataset& data, const TreatmentPair& pair) {
  for (int level : {pair.comparison, pair.baseline})
    if (!data.e_levels().count(level))
      throw DataError("treatment level " + std::to_string(level) + " absent from dataset");
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<std::size_t>(data.size()));
  for (Eigen::Index i = 0; i < data.size(); ++i)
    if (data.e()(i) == pair.comparison || data.e()(i) == pair.baseline) keep.push_back(i);
  if (keep.size() == static_cast<std::size_t>(data.size())) return data;
  return data.select(keep);
}

CodedData code_exposure(const Dataset& data, const TreatmentPair& pair, bool identity_check) {
  int zero = pair.baseline;
  int one = pair.comparison;
  if (pair.comparison == pair.baseline) {
    if (!identity_check)
      throw ConfigError("comparison equals baseline; identity-check mode not requested");
    if (data.e_levels().size() != 2)
      throw DataError("identity-check mode needs a dataset with exactly two treatment levels");
    zero = *data.e_levels().begin();
    one = *data.e_levels().rbegin();
  }
  Dataset restricted = restrict_to_pair(data, {one, zero});
  if (restricted.e_levels().size() != 2)
    throw DataError("both treatment levels must be observed");
  Eigen::VectorXi coded = restricted.e().unaryExpr([one](int v) { return v == one ? 1 : 0; });
  TreatmentPair eval{pair.comparison == one ? 1 : 0, pair.baseline == one ? 1 : 0};
  return {Dataset(restricted.c0(), std::move(coded), restricted.c1(), restricted.m(), restricted.y()),
          eval};
}

Eigen::VectorXd build_design_row(const Record& record, const DesignSpec& spec,
                                 const Overrides& overrides) {
  Eigen::VectorXd row(spec.size());
  auto lookup = [&](const ColumnRef& r) { return column_value(record, r, overrides); };
  for (Eigen::Index k = 0; k < spec.size(); ++k)
    row(k) = term_value(spec.terms()[static_cast<std::size_t>(k)], lookup);
  return row;
}

void build_design_row_into(const Dataset& data, Eigen::Index i, const DesignSpec& spec,
                           const Overrides& overrides, Eigen::Ref<Eigen::VectorXd> out) {
  auto lookup = [&](const ColumnRef& r) { return column_value(data, i, r, overrides); };
  for (Eigen::Index k = 0; k < spec.size(); ++k)
    out(k) = term_value(spec.terms()[static_cast<std::size_t>(k)], lookup);
}

Eigen::MatrixXd design_matrix(const Dataset& data, const DesignSpec& spec, const Overrides& overrides) {
  spec.check_dimensions(data.d0(), data.d1());
  Eigen::MatrixXd X(data.size(), spec.size());
  Eigen::VectorXd row(spec.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    build_design_row_into(data, i, spec, overrides, row);
    X.row(i) = row.transpose();
  }
  return X;
}

std::string to_string(const ColumnRef& r) {
  switch (r.column) {
    case Column::C0:
      return "c0_" + std::to_string(r.index + 1);
    case Column::E:
      return "e";
    case Column::C1:
      return "c1_" + std::to_string(r.index + 1);
    case Column::M:
      return "m";
  }
  return "?";
}

std::string to_string(const Term& t) {
  switch (t.kind) {
    case Term::Kind::Intercept:
      return "1";
    case Term::Kind::Covariate:
      return to_string(t.a);
    case Term::Kind::Square:
      return to_string(t.a) + "^2";
    case Term::Kind::Product:
      return to_string(t.a) + "*" + to_string(t.b);
  }
  return "?";
}

std::string to_string(const DesignSpec& spec) {
  std::string out;
  for (const auto& t : spec.terms()) {
    if (!out.empty()) out += ", ";
    out += to_string(t);
  }
  return out;
}

namespace {

// A factor name resolves to one or more column references.
std::vector<ColumnRef> resolve_factor(const std::string& name, int d0, int d1) {
  auto component = [&](const std::string& prefix, Column c, int dim) -> std::vector<ColumnRef> {
    if (name == prefix) {
      std::vector<ColumnRef> all;
      for (int j = 0; j < dim; ++j) all.push_back({c, j});
      if (all.empty()) throw ConfigError("term '" + name + "' refers to an empty block");
      return all;
    }
    const std::string idx = name.substr(prefix.size() + 1);
    std::size_t pos = 0;
    int j = 0;
    try {
      j = std::stoi(idx, &pos);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse term '" + name + "'");
    }
    if (pos != idx.size() || j < 1) throw ConfigError("cannot parse term '" + name + "'");
    if (j > dim) throw ConfigError("unresolvable column " + name);
    return {{c, j - 1}};
  };
  if (name == "e") return {{Column::E, 0}};
  if (name == "m") return {{Column::M, 0}};
  if (name == "c0" || name.rfind("c0_", 0) == 0) return component("c0", Column::C0, d0);
  if (name == "c1" || name.rfind("c1_", 0) == 0) return component("c1", Column::C1, d1);
  throw ConfigError("unknown column '" + name + "' in design");
}

}  // namespace

DesignSpec parse_design(const std::string& text, int d0, int d1) {
  std::vector<Term> terms;
  auto push = [&](Term t) {
    if (std::find(terms.begin(), terms.end(), t) != terms.end())
      throw ConfigError("duplicate design term " + to_string(t));
    terms.push_back(t);
  };
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = lower(trim(item));
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }),
               item.end());
    if (item.empty()) throw ConfigError("empty term in design '" + text + "'");
    if (item == "1") {
      push(Term::intercept());
      continue;
    }
    if (auto caret = item.find('^'); caret != std::string::npos) {
      if (item.substr(caret + 1) != "2") throw ConfigError("only squares are supported: '" + item + "'");
      for (const auto& r : resolve_factor(item.substr(0, caret), d0, d1)) push(Term::square(r));
      continue;
    }
    if (auto star = item.find('*'); star != std::string::npos) {
      auto lhs = resolve_factor(item.substr(0, star), d0, d1);
      auto rhs = resolve_factor(item.substr(star + 1), d0, d1);
      for (const auto& a : lhs)
        for (const auto& b : rhs) push(Term::product(a, b));
      continue;
    }
    for (const auto& r : resolve_factor(item, d0, d1)) push(Term::covariate(r));
  }
  return DesignSpec(std::move(terms));
}

}  // namespace pathfx
