#ifndef PATHFX_CORE_HPP
#define PATHFX_CORE_HPP

#include <Eigen/Dense>

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace pathfx {

// Error hierarchy. The CLI maps these onto its exit codes.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One observation O = (C0, E, C1, M, Y).
struct Record {
  Eigen::VectorXd c0;
  int e = 0;
  Eigen::VectorXd c1;
  double m = 0.0;
  double y = 0.0;
};

/// Candidate row as read from a file; missing fields are empty optionals.
struct RawRow {
  std::vector<std::optional<double>> c0;
  std::optional<double> e;
  std::vector<std::optional<double>> c1;
  std::optional<double> m;
  std::optional<double> y;
};

/// Validated, immutable, column-major collection of complete records.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Eigen::MatrixXd c0, Eigen::VectorXi e, Eigen::MatrixXd c1, Eigen::VectorXd m,
          Eigen::VectorXd y);

  Eigen::Index size() const { return e_.size(); }
  int d0() const { return static_cast<int>(c0_.cols()); }
  int d1() const { return static_cast<int>(c1_.cols()); }
  const std::set<int>& e_levels() const { return levels_; }

  const Eigen::MatrixXd& c0() const { return c0_; }
  const Eigen::VectorXi& e() const { return e_; }
  const Eigen::MatrixXd& c1() const { return c1_; }
  const Eigen::VectorXd& m() const { return m_; }
  const Eigen::VectorXd& y() const { return y_; }

  Record record(Eigen::Index i) const;

  /// Rows selected by index, in the given order (duplicates allowed).
  Dataset select(const std::vector<Eigen::Index>& rows) const;
  /// Same covariates with a replaced outcome column.
  Dataset with_outcome(Eigen::VectorXd y) const;

 private:
  Eigen::MatrixXd c0_;
  Eigen::VectorXi e_;
  Eigen::MatrixXd c1_;
  Eigen::VectorXd m_;
  Eigen::VectorXd y_;
  std::set<int> levels_;
};

/// Comparison level e and baseline level e'.
struct TreatmentPair {
  int comparison = 1;
  int baseline = 0;
  bool operator==(const TreatmentPair&) const = default;
};

enum class Column { C0, E, C1, M };

struct ColumnRef {
  Column column = Column::C0;
  int index = 0;  // zero-based component for C0 / C1, ignored otherwise
  auto operator<=>(const ColumnRef&) const = default;
};

struct Term {
  enum class Kind { Intercept, Covariate, Square, Product };
  Kind kind = Kind::Intercept;
  ColumnRef a{};
  ColumnRef b{};

  static Term intercept() { return {}; }
  static Term covariate(ColumnRef r) { return {Kind::Covariate, r, {}}; }
  static Term square(ColumnRef r) { return {Kind::Square, r, {}}; }
  /// Product of two columns; x*x is canonicalised to square(x).
  static Term product(ColumnRef x, ColumnRef y);

  bool involves(Column c) const;
  auto operator<=>(const Term&) const = default;
};

/// Ordered list of regressors, e.g. [1, C0, E, C1, M, E*M].
class DesignSpec {
 public:
  DesignSpec() = default;
  explicit DesignSpec(std::vector<Term> terms);

  const std::vector<Term>& terms() const { return terms_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(terms_.size()); }
  bool empty() const { return terms_.empty(); }
  bool has_intercept() const;
  bool has_term(const Term& t) const;

  /// Throws ConfigError when a column reference exceeds the given dimensions.
  void check_dimensions(int d0, int d1) const;

 private:
  std::vector<Term> terms_;
};

/// Counterfactual arguments substituted before a design row is built.
struct Overrides {
  std::optional<double> e;
  std::optional<double> m;
  std::optional<Eigen::VectorXd> c1;
};

Dataset validate_dataset(const std::vector<RawRow>& rows, int d0, int d1);

/// Records whose level is one of the pair, order preserved.
Dataset restrict_to_pair(const Dataset& data, const TreatmentPair& pair);

/// Recodes a two-level dataset as baseline -> 0, comparison -> 1.
/// With identity_check the pair may coincide; the other observed level then codes to 1.
struct CodedData {
  Dataset data;
  TreatmentPair pair;  // evaluation pair on the 0/1 scale
};
CodedData code_exposure(const Dataset& data, const TreatmentPair& pair, bool identity_check = false);

Eigen::VectorXd build_design_row(const Record& record, const DesignSpec& spec,
                                 const Overrides& overrides = {});

/// Row-wise design matrix; the same overrides are applied to every record.
Eigen::MatrixXd design_matrix(const Dataset& data, const DesignSpec& spec,
                              const Overrides& overrides = {});

/// Fills `out` with one design row without allocating a Record.
void build_design_row_into(const Dataset& data, Eigen::Index i, const DesignSpec& spec,
                           const Overrides& overrides, Eigen::Ref<Eigen::VectorXd> out);

std::string to_string(const ColumnRef& r);
std::string to_string(const Term& t);
std::string to_string(const DesignSpec& spec);

/// Parses "1, c0, e, c1, m, e*m, c0_1^2". Vector names (c0, c1) expand to all components;
/// products of vectors expand to all component pairs.
DesignSpec parse_design(const std::string& text, int d0, int d1);

}  // namespace pathfx

#endif  // PATHFX_CORE_HPP
