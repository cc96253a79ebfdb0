#include <gtest/gtest.h>

#include "otkit/exact_lp.hpp"
#include "otkit/io.hpp"
#include "test_util.hpp"

#include <json.hpp>

#include <filesystem>

using namespace otkit;
using otkit::testing::gaussian_cells;
using otkit::testing::random_histogram;
using otkit::testing::random_matrix;
using otkit::testing::read_file;
using otkit::testing::run_command;
using otkit::testing::write_file;
using json = nlohmann::json;

namespace fs = std::filesystem;

namespace {

const std::string kCli = OTKIT_CLI_PATH;

std::string workdir(const std::string& name) {
  const std::string d = std::string(OTKIT_TEST_WORKDIR) + "/" + name + "/";
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int cli(const std::string& args, const std::string& dir) {
  return run_command(kCli + " " + args + " > " + dir + "stdout.txt 2> " + dir + "stderr.txt");
}

json load(const std::string& path) { return json::parse(read_file(path)); }

std::vector<std::vector<double>> read_csv_rows(const std::string& path, std::string* header = nullptr) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::vector<double>> rows;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (first && header && !std::isdigit(static_cast<unsigned char>(line[0])) && line[0] != '-') {
      *header = line;
      first = false;
      continue;
    }
    first = false;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST(Cli, ExactValueMatchesLibraryBitwise) {
  const std::string d = workdir("exact");
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(rng, 7, 2), y = random_matrix(rng, 5, 2);
  const Vector a = random_histogram(rng, 7), b = random_histogram(rng, 5);
  write_file(d + "x.csv", io::points_csv(x, a));
  write_file(d + "y.csv", io::points_csv(y, b));
  ASSERT_EQ(cli("dist --method exact --x " + d + "x.csv --y " + d + "y.csv --out " + d + "r.json", d), 0);
  const json r = load(d + "r.json");
  const io::PointCloud px = io::read_points(d + "x.csv"), py = io::read_points(d + "y.csv");
  const double lib = network_simplex(px.weights, py.weights,
                                     build_cost(DiscreteMeasure(px.points, Histogram(px.weights)),
                                                DiscreteMeasure(py.points, Histogram(py.weights)), 2.0))
                         .value;
  EXPECT_EQ(r["value"].get<double>(), lib);
  EXPECT_EQ(r["method"], "exact");
  EXPECT_TRUE(r["converged"].get<bool>());
  EXPECT_TRUE(r["runtime_ms"].is_null());
  EXPECT_EQ(r["config"]["seed"], 0);
}

TEST(Cli, HugeEpsilonGivesProductPlan) {
  const std::string d = workdir("sinkhorn");
  std::mt19937_64 rng(2);
  const Vector a = random_histogram(rng, 4), b = random_histogram(rng, 3);
  write_file(d + "x.csv", io::points_csv(random_matrix(rng, 4, 1), a));
  write_file(d + "y.csv", io::points_csv(random_matrix(rng, 3, 1), b));
  ASSERT_EQ(cli("dist --method sinkhorn --epsilon 1e9 --x " + d + "x.csv --y " + d + "y.csv --emit-plan " + d +
                    "plan.csv --out " + d + "r.json",
                d),
            0);
  std::string header;
  const auto rows = read_csv_rows(d + "plan.csv", &header);
  EXPECT_EQ(header, "i,j,mass");
  ASSERT_EQ(rows.size(), 12u);
  const io::PointCloud px = io::read_points(d + "x.csv"), py = io::read_points(d + "y.csv");
  for (const auto& r : rows) {
    const auto i = static_cast<Index>(r[0]), j = static_cast<Index>(r[1]);
    EXPECT_NEAR(r[2], px.weights[i] * py.weights[j], 1e-9);
  }
}

TEST(Cli, InputErrorsExitTwo) {
  const std::string d = workdir("errors");
  write_file(d + "empty.csv", "");
  write_file(d + "ok.csv", "0.5\n0.5\n");
  write_file(d + "bad.csv", "0.5\n0.6\n");
  EXPECT_EQ(cli("dist --method exact --a " + d + "empty.csv --b " + d + "ok.csv --cost " + d + "ok.csv", d), 2);
  EXPECT_EQ(cli("dist --method exact --a " + d + "bad.csv --b " + d + "ok.csv", d), 2);
  EXPECT_EQ(cli("dist --method nosuch --a " + d + "ok.csv --b " + d + "ok.csv", d), 2);
  EXPECT_EQ(cli("dist --method exact --a " + d + "missing.csv --b " + d + "ok.csv", d), 2);
  EXPECT_FALSE(read_file(d + "stderr.txt").empty());
  EXPECT_EQ(cli("plotdata --trace " + d + "ok.csv --out " + d + "p.csv", d), 2);
}

TEST(Cli, NonConvergenceExitsThreeWithJson) {
  const std::string d = workdir("noconv");
  std::mt19937_64 rng(3);
  write_file(d + "x.csv", io::points_csv(random_matrix(rng, 6, 2), random_histogram(rng, 6)));
  write_file(d + "y.csv", io::points_csv(random_matrix(rng, 6, 2), random_histogram(rng, 6)));
  EXPECT_EQ(cli("dist --method sinkhorn --epsilon 0.001 --max-iter 3 --x " + d + "x.csv --y " + d + "y.csv --out " +
                    d + "r.json",
                d),
            3);
  const json r = load(d + "r.json");
  EXPECT_FALSE(r["converged"].get<bool>());
  EXPECT_EQ(r["iterations"], 3);
}

TEST(Cli, BarycenterSingleInputAndDefaultWeights) {
  const std::string d = workdir("barycenter");
  const Vector g = gaussian_cells(40, 0.4, 0.1);
  write_file(d + "g.csv", io::histogram_csv(g));
  write_file(d + "h.csv", io::histogram_csv(gaussian_cells(40, 0.6, 0.1)));
  // eps = h^2 / 20 on 40 cells keeps the entropic blur far below the bound.
  ASSERT_EQ(cli("barycenter --input " + d + "g.csv --epsilon 3.125e-5 --out " + d + "one.csv --report " + d + "one.json", d), 0);
  const Vector one = io::read_histogram(d + "one.csv");
  EXPECT_LT((one - io::read_histogram(d + "g.csv")).lpNorm<1>(), 1e-6);
  ASSERT_EQ(cli("barycenter --input " + d + "g.csv --input " + d + "h.csv --out " + d + "two.csv --report " + d +
                    "two.json",
                d),
            0);
  const json r = load(d + "two.json");
  EXPECT_TRUE(r["lambda_default"].get<bool>());
  EXPECT_EQ(r["lambda"], json::array({0.5, 0.5}));
}

TEST(Cli, McCannEndpointsAndLinearPath) {
  const std::string d = workdir("mccann");
  write_file(d + "x.csv", "0,0,1\n");
  write_file(d + "y.csv", "1,2,1\n");
  ASSERT_EQ(cli("interpolate --method mccann --x " + d + "x.csv --y " + d + "y.csv --steps 4 --out-dir " + d +
                    "snap --report " + d + "r.json",
                d),
            0);
  for (int k = 0; k <= 4; ++k) {
    char name[64];
    std::snprintf(name, sizeof name, "snap/snapshot_%04d.csv", k);
    const io::PointCloud pc = io::read_points(d + name);
    ASSERT_EQ(pc.points.rows(), 1);
    EXPECT_NEAR(pc.points(0, 0), k / 4.0, 1e-15);
    EXPECT_NEAR(pc.points(0, 1), 2.0 * k / 4.0, 1e-15);
  }
}

TEST(Cli, DynamicInterpolationCloseToExact) {
  const std::string d = workdir("dynamic");
  const Vector g0 = gaussian_cells(48, 0.3, 0.07), g1 = gaussian_cells(48, 0.65, 0.07);
  write_file(d + "a.csv", io::histogram_csv(g0));
  write_file(d + "b.csv", io::histogram_csv(g1));
  ASSERT_EQ(cli("interpolate --method dynamic --a " + d + "a.csv --b " + d + "b.csv --steps 16 --max-iter 600 "
                "--out-dir " + d + "snap --report " + d + "r.json --emit-plot",
                d),
            0);
  const json r = load(d + "r.json");
  const double value = r["value"].get<double>();
  EXPECT_NEAR(value, 0.35 * 0.35, 0.05 * 0.35 * 0.35);
  EXPECT_EQ(io::read_histogram(d + "snap/snapshot_0000.csv"), io::read_histogram(d + "a.csv"));
  EXPECT_EQ(io::read_histogram(d + "snap/snapshot_0016.csv"), io::read_histogram(d + "b.csv"));
  ASSERT_EQ(cli("plotdata --trace " + d + "r.json --out " + d + "plot.csv", d), 0);
  std::string header;
  read_csv_rows(d + "plot.csv", &header);
  EXPECT_EQ(header, "iteration,objective");
}

TEST(Cli, GwTraceIsNonincreasing) {
  const std::string d = workdir("gw");
  std::mt19937_64 rng(4);
  write_file(d + "x.csv", io::points_csv(random_matrix(rng, 6, 2), Vector::Constant(6, 1.0 / 6)));
  write_file(d + "y.csv", io::points_csv(random_matrix(rng, 5, 3), Vector::Constant(5, 0.2)));
  ASSERT_EQ(cli("dist --method gw --epsilon 0.01 --x " + d + "x.csv --y " + d + "y.csv --emit-plot --out " + d +
                    "r.json",
                d),
            0);
  ASSERT_EQ(cli("plotdata --trace " + d + "r.json --out " + d + "plot.csv", d), 0);
  std::string header;
  const auto rows = read_csv_rows(d + "plot.csv", &header);
  EXPECT_EQ(header, "outer_iter,energy");
  ASSERT_GE(rows.size(), 2u);
  for (std::size_t k = 1; k < rows.size(); ++k) EXPECT_LE(rows[k][1], rows[k - 1][1] + 1e-12);
}

TEST(Cli, SinkhornPlotHeaderAndTiming) {
  const std::string d = workdir("plot");
  std::mt19937_64 rng(5);
  write_file(d + "x.csv", io::points_csv(random_matrix(rng, 5, 2), Vector::Constant(5, 0.2)));
  write_file(d + "y.csv", io::points_csv(random_matrix(rng, 5, 2), Vector::Constant(5, 0.2)));
  ASSERT_EQ(cli("dist --method sinkhorn --epsilon 0.1 --x " + d + "x.csv --y " + d + "y.csv --emit-plot --timing --out " + d +
                    "r.json",
                d),
            0);
  EXPECT_TRUE(load(d + "r.json")["runtime_ms"].is_number());
  ASSERT_EQ(cli("plotdata --trace " + d + "r.json --out " + d + "plot.csv", d), 0);
  std::string header;
  read_csv_rows(d + "plot.csv", &header);
  EXPECT_EQ(header, "iteration,log10_residual");
}
