#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "livingmeta/common.hpp"
#include "livingmeta/config.hpp"
#include "livingmeta/csv.hpp"
#include "livingmeta/linalg.hpp"
#include "livingmeta/rng.hpp"
#include "livingmeta/sha256.hpp"

using namespace livingmeta;
using namespace livingmeta::linalg;

TEST_CASE("dates parse in both notations and agree") {
  Date a = parse_date("2024-01-31");
  Date b = parse_date("31.01.2024");
  CHECK(a == b);
  CHECK(a.year == 2024);
  CHECK(a.month == 1);
  CHECK(a.day == 31);
  CHECK(a.iso() == "2024-01-31");
  CHECK(a.month_year() == "01/24");
}

TEST_CASE("date validation is day-level and leap-aware") {
  CHECK_NOTHROW(parse_date("2024-02-29"));
  CHECK_THROWS_AS(parse_date("2023-02-29"), Error);
  CHECK_NOTHROW(parse_date("2000-02-29"));
  CHECK_THROWS_AS(parse_date("1900-02-29"), Error);
  CHECK_THROWS_AS(parse_date("2024-04-31"), Error);
  CHECK_THROWS_AS(parse_date("2024-13-01"), Error);
  CHECK_THROWS_AS(parse_date("2024-00-10"), Error);
  CHECK_THROWS_AS(parse_date("garbled"), Error);
  CHECK_THROWS_AS(parse_date("2024/01/31"), Error);
  CHECK_THROWS_AS(parse_date(""), Error);
}

TEST_CASE("date errors carry the validation exit code") {
  try {
    parse_date("2023-02-29");
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
    CHECK(e.exit_code() == 2);
  }
}

TEST_CASE("try_parse_date swallows only parse failures") {
  CHECK(try_parse_date("2024-05-05").has_value());
  CHECK_FALSE(try_parse_date("05-05-2024").has_value());
  CHECK_FALSE(try_parse_date("not a date").has_value());
}

TEST_CASE("dates order chronologically") {
  CHECK(parse_date("2024-01-31") < parse_date("2024-02-01"));
  CHECK(parse_date("2024-12-31") < parse_date("2025-01-01"));
}

TEST_CASE("normalize_title folds case and punctuation") {
  CHECK(normalize_title("ChatGPT in the Classroom: A Field Study!") ==
        "chatgpt in the classroom a field study");
  CHECK(normalize_title("  spaced   out \t title ") == "spaced out title");
  CHECK(normalize_title("UPPER lower") == normalize_title("upper LOWER"));
  CHECK(normalize_title("") == "");
  CHECK(normalize_title("!!!") == "");
}

TEST_CASE("fmt_full round-trips doubles exactly") {
  for (double x : {0.1, 1.0 / 3.0, 0.4472135954999579, -1.5e-17, 3571.0,
                   0.6931471805599453}) {
    std::string s = fmt_full(x);
    CHECK(std::strtod(s.c_str(), nullptr) == x);
  }
  CHECK(fmt_full(0.5) == "0.5");
  CHECK(fmt_full(2.0) == "2");
}

TEST_CASE("fmt_fixed pins the digit count") {
  CHECK(fmt_fixed(0.31005, 2) == "0.31");
  CHECK(fmt_fixed(-0.4, 3) == "-0.400");
}

TEST_CASE("sha256 matches FIPS vectors") {
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
  // one block + padding boundary (55/56/64 bytes)
  CHECK(sha256_hex(std::string(55, 'a')) ==
        "9f4390f8d30c2dd92ec9f095b65e2b9ae9b0a925a5258e241c9f1e910f734318");
  CHECK(sha256_hex(std::string(64, 'a')) ==
        "ffe054fe7ae0cb6dc65c3af9b61d5209f439851db43d0ba5997337df154668eb");
}

TEST_CASE("csv line parsing honors quotes and escapes") {
  auto f = csv::parse_line("a,b,c", 1);
  REQUIRE(f.size() == 3);
  CHECK(f[1] == "b");

  f = csv::parse_line("\"x,y\",\"he said \"\"hi\"\"\",", 1);
  REQUIRE(f.size() == 3);
  CHECK(f[0] == "x,y");
  CHECK(f[1] == "he said \"hi\"");
  CHECK(f[2] == "");

  CHECK_THROWS_AS(csv::parse_line("\"unterminated", 7), Error);
  try {
    csv::parse_line("\"unterminated", 7);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 7") != std::string::npos);
  }
}

TEST_CASE("csv writer output reparses to the same fields") {
  csv::Writer w;
  w.row({"plain", "with,comma", "with \"quote\"", ""});
  std::string line = w.str();
  REQUIRE(!line.empty());
  line.pop_back();  // strip the trailing newline before parse_line
  auto f = csv::parse_line(line, 1);
  REQUIRE(f.size() == 4);
  CHECK(f[0] == "plain");
  CHECK(f[1] == "with,comma");
  CHECK(f[2] == "with \"quote\"");
  CHECK(f[3] == "");
  CHECK(csv::quote("new\nline") == "\"new\nline\"");
}

TEST_CASE("csv files expose columns by case-insensitive name") {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / "lm_test_table.csv";
  {
    std::ofstream out(p);
    out << "Id,Value\r\nr1,3\n\nr2,4\n";
  }
  csv::Table t = csv::read_file(p.string());
  CHECK(t.column("id") == 0);
  CHECK(t.column("value") == 1);
  CHECK(t.column("absent") == -1);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][t.column("value")] == "4");
  fs::remove(p);

  CHECK_THROWS_AS(csv::read_file((fs::temp_directory_path() /
                                  "lm_definitely_missing.csv").string()),
                  Error);
}

TEST_CASE("config files parse key = value pairs") {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / "lm_test_config.cfg";
  {
    std::ofstream out(p);
    out << "# comment\n"
        << "prior_mu_sd = 1.5\n"
        << "sensitivity_grid = 0, 0.3, 0.6\n"
        << "label= spaced value \n"
        << "\n";
  }
  Config cfg = Config::from_file(p.string());
  CHECK(cfg.has("prior_mu_sd"));
  CHECK_FALSE(cfg.has("missing"));
  CHECK(cfg.get_double("prior_mu_sd", 9.9) == 1.5);
  CHECK(cfg.get_double("missing", 9.9) == 9.9);
  CHECK(cfg.get("label", "") == "spaced value");
  auto grid = cfg.get_doubles("sensitivity_grid", {1.0});
  REQUIRE(grid.size() == 3);
  CHECK(grid[1] == 0.3);
  fs::remove(p);
}

TEST_CASE("rng streams are deterministic and seed-separated") {
  RngStream a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 64; ++i) {
    double xa = a.normal(), xb = b.normal(), xc = c.normal();
    all_equal = all_equal && (xa == xb);
    any_diff = any_diff || (xa != xc);
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("mix_seed separates close inputs") {
  CHECK(mix_seed(42, 0) != mix_seed(42, 1));
  CHECK(mix_seed(42, 0) != mix_seed(43, 0));
  CHECK(mix_seed(0, 0) != 0);
}

TEST_CASE("uniform stays strictly inside the open interval") {
  RngStream r(7);
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
  double v = r.uniform(2.0, 3.0);
  CHECK(v > 2.0);
  CHECK(v < 3.0);
}

TEST_CASE("normal moments look sane at fixed seed") {
  RngStream r(123);
  const int n = 200000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    sum += x;
    sumsq += x * x;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

namespace {

Matrix random_spd(int n, RngStream& r) {
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = r.normal();
  Matrix s(n, n);
  // A Aᵀ + n I is comfortably positive definite.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0;
      for (int k = 0; k < n; ++k) acc += a(i, k) * a(j, k);
      s(i, j) = acc + (i == j ? n : 0.0);
    }
  return s;
}

}  // namespace

TEST_CASE("cholesky round-trips random SPD matrices") {
  RngStream r(2024);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 1 + static_cast<int>(r.uniform() * 6);
    Matrix s = random_spd(n, r);
    auto l = cholesky_lower(s);
    REQUIRE(l.has_value());
    Matrix back = matmul(*l, transpose(*l));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        CHECK(std::abs(back(i, j) - s(i, j)) < 1e-10);
  }
}

TEST_CASE("cholesky refuses non-positive-definite input") {
  Matrix m(2, 2);
  m(0, 0) = 1.0; m(0, 1) = 2.0;
  m(1, 0) = 2.0; m(1, 1) = 1.0;  // eigenvalues 3 and -1
  CHECK_FALSE(cholesky_lower(m).has_value());

  Matrix z(1, 1);
  z(0, 0) = 0.0;
  CHECK_FALSE(cholesky_lower(z).has_value());
}

TEST_CASE("cholesky_solve reproduces known solutions") {
  RngStream r(99);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 2 + static_cast<int>(r.uniform() * 4);
    Matrix s = random_spd(n, r);
    std::vector<double> x_true(n);
    for (auto& v : x_true) v = r.normal();
    std::vector<double> b(n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) b[i] += s(i, j) * x_true[j];
    auto l = cholesky_lower(s);
    REQUIRE(l.has_value());
    auto x = cholesky_solve(*l, b);
    for (int i = 0; i < n; ++i) CHECK(std::abs(x[i] - x_true[i]) < 1e-9);
  }
}

TEST_CASE("cholesky_inverse gives a true inverse") {
  RngStream r(5);
  Matrix s = random_spd(4, r);
  auto l = cholesky_lower(s);
  REQUIRE(l.has_value());
  Matrix inv = cholesky_inverse(*l);
  Matrix prod = matmul(s, inv);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(std::abs(prod(i, j) - (i == j ? 1.0 : 0.0)) < 1e-10);
}

TEST_CASE("log determinant matches a hand computation") {
  // diag(4, 9): det = 36, log det = log 36.
  Matrix m(2, 2);
  m(0, 0) = 4.0; m(1, 1) = 9.0;
  auto l = cholesky_lower(m);
  REQUIRE(l.has_value());
  CHECK(std::abs(log_det_from_cholesky(*l) - std::log(36.0)) < 1e-12);
}

TEST_CASE("triangular solves agree with direct substitution") {
  Matrix l(2, 2);
  l(0, 0) = 2.0; l(1, 0) = 1.0; l(1, 1) = 3.0;
  auto y = solve_lower(l, {4.0, 8.0});
  CHECK(y[0] == 2.0);
  CHECK(y[1] == 2.0);
  auto x = solve_lower_transposed(l, {4.0, 6.0});
  // Lᵀ x = b: 3 x1 = 6 -> x1 = 2; 2 x0 + 1 x1 = 4 -> x0 = 1.
  CHECK(x[1] == 2.0);
  CHECK(x[0] == 1.0);
}
