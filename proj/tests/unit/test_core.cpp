#include <doctest.h>

#include "pathfx/core.hpp"
#include "pathfx/csv.hpp"
#include "pathfx/special.hpp"

#include <cmath>
#include <limits>
#include <sstream>

using namespace pathfx;

namespace {

Dataset small_dataset() {
  Eigen::MatrixXd c0(4, 1);
  c0 << 0.5, 1.0, 1.5, 2.0;
  Eigen::VectorXi e(4);
  e << 0, 1, 0, 1;
  Eigen::MatrixXd c1(4, 2);
  c1 << 1, 2, 3, 4, 5, 6, 7, 8;
  Eigen::VectorXd m(4), y(4);
  m << 0.1, 0.2, 0.3, 0.4;
  y << 1, 2, 3, 4;
  return Dataset(c0, e, c1, m, y);
}

}  // namespace

TEST_CASE("parse_design expands vector names and products") {
  const DesignSpec d = parse_design("1, c0, e, c1, m, e*m", 1, 3);
  CHECK(d.size() == 8);
  CHECK(d.has_intercept());
  CHECK(to_string(d) == "1, c0_1, e, c1_1, c1_2, c1_3, m, e*m");

  const DesignSpec p = parse_design("c0*c1", 1, 3);
  CHECK(p.size() == 3);
  const DesignSpec s = parse_design("c0^2, c1_1*c1", 1, 3);
  CHECK(s.size() == 4);
  CHECK(s.terms()[0].kind == Term::Kind::Square);
  CHECK(s.terms()[1].kind == Term::Kind::Square);  // c1_1*c1_1
}

TEST_CASE("parse_design rejects bad input") {
  CHECK_THROWS_AS(parse_design("1, c0, c0", 1, 3), ConfigError);
  CHECK_THROWS_AS(parse_design("1, c1_4", 1, 3), ConfigError);
  CHECK_THROWS_AS(parse_design("1, z", 1, 3), ConfigError);
  CHECK_THROWS_AS(parse_design("", 1, 3), ConfigError);
}

TEST_CASE("design rows honour overrides") {
  const Dataset data = small_dataset();
  const DesignSpec d = parse_design("1, c0, e, c1, m, e*m, c0^2", 1, 2);
  const Record r = data.record(1);
  Eigen::VectorXd row = build_design_row(r, d);
  Eigen::VectorXd expect(8);
  expect << 1, 1.0, 1, 3, 4, 0.2, 0.2, 1.0;
  CHECK((row - expect).norm() == doctest::Approx(0.0));

  Overrides o;
  o.e = 0.0;
  o.m = 2.0;
  o.c1 = Eigen::Vector2d(-1, -2);
  row = build_design_row(r, d, o);
  expect << 1, 1.0, 0, -1, -2, 2.0, 0.0, 1.0;
  CHECK((row - expect).norm() == doctest::Approx(0.0));

  const Eigen::MatrixXd X = design_matrix(data, d);
  CHECK(X.rows() == 4);
  CHECK(X(3, 6) == doctest::Approx(0.4));
  Eigen::VectorXd into(d.size());
  build_design_row_into(data, 2, d, {}, into);
  CHECK((into - X.row(2).transpose()).norm() == 0.0);
}

TEST_CASE("validate_dataset rejects missing and non-integer exposure") {
  RawRow ok{{1.0}, 1.0, {0.5}, 0.1, 2.0};
  RawRow missing = ok;
  missing.m.reset();
  CHECK_THROWS_AS(validate_dataset({ok, missing}, 1, 1), DataError);
  RawRow frac = ok;
  frac.e = 0.5;
  CHECK_THROWS_AS(validate_dataset({ok, frac}, 1, 1), DataError);
  RawRow nan = ok;
  nan.y = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate_dataset({ok, nan}, 1, 1), DataError);
  CHECK(validate_dataset({ok, ok}, 1, 1).size() == 2);
}

TEST_CASE("code_exposure restricts and recodes") {
  RawRow r0{{1.0}, 0.0, {0.5}, 0.1, 2.0};
  RawRow r1 = r0, r2 = r0;
  r1.e = 1.0;
  r2.e = 2.0;
  const Dataset data = validate_dataset({r0, r1, r2, r2, r0}, 1, 1);
  CHECK(data.e_levels().size() == 3);

  const CodedData coded = code_exposure(data, {2, 0});
  CHECK(coded.data.size() == 4);
  CHECK(coded.pair == TreatmentPair{1, 0});
  CHECK(coded.data.e().sum() == 2);

  const CodedData rev = code_exposure(data, {0, 2});
  CHECK(rev.pair == TreatmentPair{1, 0});
  CHECK(rev.data.e().sum() == 2);
  CHECK(rev.data.e()(0) == 1);

  CHECK_THROWS_AS(code_exposure(data, {3, 0}), DataError);
  CHECK_THROWS_AS(code_exposure(data, {1, 1}), ConfigError);

  const Dataset two = restrict_to_pair(data, {1, 0});
  const CodedData id = code_exposure(two, {1, 1}, true);
  CHECK(id.pair == TreatmentPair{1, 1});
  const CodedData id0 = code_exposure(two, {0, 0}, true);
  CHECK(id0.pair == TreatmentPair{0, 0});
}

TEST_CASE("csv round trip is exact") {
  const Dataset data = small_dataset();
  std::stringstream buf;
  write_csv(buf, data);
  const Dataset back = read_csv(buf);
  CHECK(back.d0() == 1);
  CHECK(back.d1() == 2);
  CHECK((back.c1() - data.c1()).norm() == 0.0);
  CHECK((back.y() - data.y()).norm() == 0.0);
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("csv schema errors") {
  std::stringstream missing_col("c0_1,e,c1_1,m\n1,0,1,1\n");
  CHECK_THROWS_AS(read_csv(missing_col), DataError);
  std::stringstream extra("c0_1,e,c1_1,m,y,z\n1,0,1,1,1,9\n1,1,1,1,1,9\n");
  CHECK_THROWS_AS(read_csv(extra), DataError);
  std::stringstream extra2("c0_1,e,c1_1,m,y,z\n1,0,1,1,1,9\n1,1,1,1,1,9\n");
  CHECK(read_csv(extra2, CsvOptions{true}).size() == 2);
  std::stringstream bad("c0_1,e,c1_1,m,y\n1,0,1,1,1\n1,1,x,1,1\n");
  try {
    read_csv(bad);
    FAIL("expected a DataError");
  } catch (const DataError& err) {
    CHECK(std::string(err.what()).find("row 1") != std::string::npos);
  }
}

TEST_CASE("link helpers") {
  CHECK(normal_cdf(0.9) == doctest::Approx(0.8159398746532405).epsilon(1e-13));
  CHECK(logit(0.3) == doctest::Approx(-0.8472978603872036).epsilon(1e-13));
  CHECK(expit(logit(0.3)) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(expit(800.0) == 1.0);
  CHECK(expit(-800.0) >= 0.0);
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(student_t_quantile(0.975, 999) == doctest::Approx(1.9623414611334487).epsilon(1e-10));
  CHECK(student_t_quantile(0.975, 199) == doctest::Approx(1.971956544249395).epsilon(1e-10));
}
