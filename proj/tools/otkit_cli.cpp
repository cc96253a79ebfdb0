// otkit command-line tool: dist, barycenter, interpolate, plotdata.

#include "otkit/io.hpp"
#include "otkit/otkit.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

namespace {

using json = nlohmann::ordered_json;
using namespace otkit;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNoConvergence = 3;

struct CommonFlags {
  double tol = 1e-9;
  long max_iter = 0;  // 0: solver default
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out;
  bool timing = false;
  bool emit_plot = false;
};

int threads_from_env() {
  const char* env = std::getenv("OTKIT_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 1024) throw InputError("OTKIT_THREADS must be a positive integer");
  return static_cast<int>(v);
}

void add_common(CLI::App* cmd, CommonFlags& c) {
  cmd->add_option("--tol", c.tol, "Stopping tolerance")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--max-iter", c.max_iter, "Iteration budget (0: solver default)")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--threads", c.threads, "Worker threads (default: OTKIT_THREADS or 1)")
      ->check(CLI::Range(1, 1024));
  cmd->add_flag("--timing", c.timing, "Record wall-clock runtime_ms (otherwise null, keeping output reproducible)");
  cmd->add_flag("--emit-plot", c.emit_plot, "Embed a trace for the plotdata subcommand");
}

json config_json(const CommonFlags& c, long effective_max_iter) {
  json j;
  j["tol"] = c.tol;
  j["max_iter"] = effective_max_iter;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j;
}

void emit(const json& j, const std::string& path) {
  const std::string text = j.dump(2) + "\n";
  if (path.empty() || path == "-") std::cout << text;
  else io::write_text(path, text);
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  json runtime(bool enabled) const {
    if (!enabled) return nullptr;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

json to_json(const Vector& v) {
  json arr = json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

json to_json(const std::vector<double>& v) { return json(v); }

json residual_json(const MarginalResidual& r) { return {{"rows", r.rows}, {"columns", r.columns}}; }

// Cell centres of an n1 x n2 grid on [0,1]^2 (or [0,1] when n2 == 1).
Matrix grid_centres(Index n1, Index n2) {
  const Index d = n2 == 1 ? 1 : 2;
  Matrix x(n1 * n2, d);
  for (Index i = 0; i < n1; ++i)
    for (Index j = 0; j < n2; ++j) {
      x(i * n2 + j, 0) = (static_cast<double>(i) + 0.5) / static_cast<double>(n1);
      if (d == 2) x(i * n2 + j, 1) = (static_cast<double>(j) + 0.5) / static_cast<double>(n2);
    }
  return x;
}

CostMatrix power_cost(const Matrix& x, const Matrix& y, double p) {
  if (x.cols() != y.cols()) throw InputError("point clouds have different dimensions");
  Matrix C = squared_distances(x, y).cwiseMax(0.0);
  if (p != 2.0) C = C.cwiseSqrt().array().pow(p).matrix();
  return CostMatrix(std::move(C), GroundCost{"euclidean_power", p});
}

// ---------------------------------------------------------------------------
// dist
// ---------------------------------------------------------------------------

struct DistFlags {
  std::string method = "exact";
  std::string a, b, x, y, cost, graph;
  double epsilon = 1e-2;
  double p = 2.0;
  double tau = 1.0;
  long quad_n = 64;
  long directions = 0;
  std::string emit_plan;
};

struct DiscreteInput {
  Vector a, b;
  Matrix x, y;  // empty without point files
  CostMatrix C;
};

DiscreteInput load_discrete(const DistFlags& f, bool need_cost) {
  DiscreteInput in;
  if (!f.x.empty()) {
    io::PointCloud pc = io::read_points(f.x);
    in.x = std::move(pc.points);
    in.a = std::move(pc.weights);
  } else if (!f.a.empty()) {
    in.a = io::read_histogram(f.a);
  } else {
    throw InputError("dist: give the source as --a (histogram) or --x (points)");
  }
  if (!f.y.empty()) {
    io::PointCloud pc = io::read_points(f.y);
    in.y = std::move(pc.points);
    in.b = std::move(pc.weights);
  } else if (!f.b.empty()) {
    in.b = io::read_histogram(f.b);
  } else {
    throw InputError("dist: give the target as --b (histogram) or --y (points)");
  }
  if (!need_cost) return in;
  if (!f.cost.empty()) {
    in.C = CostMatrix(io::read_matrix(f.cost));
  } else if (in.x.size() > 0 && in.y.size() > 0) {
    in.C = power_cost(in.x, in.y, f.p);
  } else {
    throw InputError("dist: need --cost or point files for both measures");
  }
  if (in.C.rows() != in.a.size() || in.C.cols() != in.b.size())
    throw InputError("dist: cost shape does not match the histograms");
  return in;
}

int cmd_dist(const DistFlags& f, const CommonFlags& c) {
  const Stopwatch clock;
  json out;
  out["schema"] = 1;
  out["command"] = "dist";
  out["method"] = f.method;
  std::optional<Matrix> plan;
  std::optional<MarginalResidual> residual;
  json trace;
  bool converged = true;
  long iterations = 0;
  double value = 0.0;
  long effective_max_iter = c.max_iter;
  const std::string& m = f.method;

  if (m == "exact" || m == "dual_ascent" || m == "auction" || m == "sinkhorn" || m == "sinkhorn_log" ||
      m == "unbalanced") {
    const DiscreteInput in = load_discrete(f, true);
    if (m == "exact") {
      NetworkSimplexOptions o;
      o.max_pivots = c.max_iter;
      effective_max_iter = c.max_iter > 0 ? c.max_iter : 50 * in.a.size() * in.b.size() + 1000;
      const NetworkSimplexResult r = network_simplex(in.a, in.b, in.C, o);
      value = r.value;
      iterations = r.pivots;
      plan = r.plan.matrix;
    } else if (m == "dual_ascent") {
      const DualAscentResult r = dual_ascent(in.a, in.b, in.C);
      value = r.value;
      iterations = r.iterations;
      plan = r.plan.matrix;
    } else if (m == "auction") {
      const Index n = in.a.size();
      if (in.b.size() != n) throw InputError("dist: auction needs square problems");
      const double u = 1.0 / static_cast<double>(n);
      if ((in.a.array() - u).abs().maxCoeff() > 1e-12 || (in.b.array() - u).abs().maxCoeff() > 1e-12)
        throw InputError("dist: auction needs uniform weights");
      const AuctionResult r = auction(in.C, f.epsilon);
      Matrix P = Matrix::Zero(n, n);
      for (Index i = 0; i < n; ++i) P(i, r.assignment[static_cast<std::size_t>(i)]) = u;
      value = r.cost * u;
      iterations = r.total_iterations;
      plan = std::move(P);
      out["epsilon"] = f.epsilon;
    } else if (m == "sinkhorn" || m == "sinkhorn_log") {
      SinkhornOptions o;
      o.tol = c.tol;
      o.max_iter = c.max_iter;
      o.record_trace = c.emit_plot;
      effective_max_iter = c.max_iter > 0 ? c.max_iter : default_max_iter(in.C.max_abs(), f.epsilon);
      const SinkhornResult r =
          m == "sinkhorn" ? sinkhorn(in.a, in.b, in.C, f.epsilon, o) : sinkhorn_log(in.a, in.b, in.C, f.epsilon, o);
      value = r.report.primal;
      iterations = r.report.iterations;
      converged = r.report.converged;
      plan = r.plan.matrix;
      out["epsilon"] = f.epsilon;
      out["regularized"] = r.report.regularized;
      out["dual"] = r.report.dual;
      if (c.emit_plot) trace = {{"kind", "sinkhorn"}, {"residual", to_json(r.report.trace)}};
    } else {
      GeneralizedSinkhornOptions o;
      o.tol = c.tol;
      if (c.max_iter > 0) o.max_iter = c.max_iter;
      effective_max_iter = o.max_iter;
      const MarginalPenalty F = MarginalPenalty::kl(in.a, f.tau), G = MarginalPenalty::kl(in.b, f.tau);
      const GeneralizedSinkhornResult r = generalized_sinkhorn(F, G, in.C, f.epsilon, o);
      value = unbalanced_cost(r.plan.matrix, in.C, F, G);
      iterations = r.iterations;
      converged = r.converged;
      plan = r.plan.matrix;
      out["epsilon"] = f.epsilon;
      out["tau"] = f.tau;
      out["objective"] = r.objective;
    }
    residual = marginal_residual(*plan, in.a, in.b);
  } else if (m == "w1d" || m == "sliced") {
    if (f.x.empty() || f.y.empty()) throw InputError("dist: " + m + " needs --x and --y point files");
    const io::PointCloud px = io::read_points(f.x), py = io::read_points(f.y);
    const DiscreteMeasure alpha = DiscreteMeasure::dropping_zeros(px.points, Histogram(px.weights));
    const DiscreteMeasure beta = DiscreteMeasure::dropping_zeros(py.points, Histogram(py.weights));
    if (m == "w1d") {
      if (alpha.dim() != 1 || beta.dim() != 1) throw InputError("dist: w1d needs 1-D points");
      value = w_p_1d(alpha, beta, f.p);
    } else {
      value = sliced_w(alpha, beta, f.p, f.directions, c.seed);
      out["directions"] = f.directions > 0 ? f.directions : 64 * alpha.dim();
    }
  } else if (m == "gw") {
    if (f.x.empty() || f.y.empty()) throw InputError("dist: gw needs --x and --y point files");
    const io::PointCloud px = io::read_points(f.x), py = io::read_points(f.y);
    MetricMeasureSpace X = MetricMeasureSpace::from_points(px.points);
    MetricMeasureSpace Y = MetricMeasureSpace::from_points(py.points);
    X = MetricMeasureSpace(X.D, px.weights);
    Y = MetricMeasureSpace(Y.D, py.weights);
    GromovOptions o;
    if (c.max_iter > 0) o.outer_iters = c.max_iter;
    effective_max_iter = o.outer_iters;
    o.inner.tol = std::min(c.tol, 1e-9);
    const GromovResult r = entropic_gw(X, Y, f.epsilon, o);
    value = r.energy;
    iterations = r.outer_iterations;
    converged = r.outer_iterations < o.outer_iters;
    plan = r.plan.matrix;
    residual = marginal_residual(*plan, px.weights, py.weights);
    out["epsilon"] = f.epsilon;
    if (c.emit_plot) trace = {{"kind", "gw"}, {"energy", to_json(r.energy_trace)}};
  } else if (m == "semidiscrete" || m == "semidiscrete_sgd") {
    if (f.y.empty()) throw InputError("dist: " + m + " needs --y target points (source: uniform on [0,1]^d)");
    if (f.quad_n < 1) throw InputError("dist: --quad-n must be positive");
    const io::PointCloud py = io::read_points(f.y);
    const Index d = py.points.cols();
    const QuadratureSource source = QuadratureSource::uniform_box(d, f.quad_n);
    const double eps = f.epsilon;
    const PowerCost cost{f.p};
    SemiDual g;
    if (m == "semidiscrete") {
      SemiDualSolveOptions o;
      o.tol = c.tol;
      if (c.max_iter > 0) o.max_iter = c.max_iter;
      effective_max_iter = o.max_iter;
      const SemiDualSolveResult r = solve_semidual(source, py.points, py.weights, eps, o, cost);
      g = r.potential;
      iterations = r.iterations;
      converged = r.converged;
    } else {
      StochasticOptions o;
      if (c.max_iter > 0) o.steps = c.max_iter;
      o.seed = c.seed;
      effective_max_iter = o.steps;
      g = sga_semidual(uniform_box_sampler(d), py.points, py.weights, eps, o, cost);
      iterations = o.steps;
    }
    const SemiDualEvaluation ev = semidual_energy_grad(g.g, source, py.points, py.weights, eps, cost);
    value = ev.energy;
    out["epsilon"] = eps;
    out["quadrature_nodes"] = source.nodes.rows();
    out["potential"] = to_json(g.g);
    out["gradient_l1"] = ev.gradient.lpNorm<1>();
    if (c.emit_plot) {
      const std::vector<Index> cell = laguerre_assign(g.g, source.nodes, py.points, cost);
      json nodes = json::array();
      for (Index i = 0; i < source.nodes.rows(); ++i) nodes.push_back(to_json(Vector(source.nodes.row(i).transpose())));
      trace = {{"kind", "semidiscrete"}, {"nodes", nodes}, {"cell", cell}};
    }
  } else if (m == "graph") {
    if (f.graph.empty() || f.a.empty() || f.b.empty()) throw InputError("dist: graph needs --graph, --a and --b");
    const Vector a = io::read_histogram(f.a), b = io::read_histogram(f.b);
    if (a.size() != b.size()) throw InputError("dist: graph histograms differ in length");
    const Matrix E = io::read_matrix(f.graph);
    if (E.cols() != 3) throw InputError("dist: graph CSV needs columns i,j,w");
    std::vector<GraphEdge> edges;
    for (Index e = 0; e < E.rows(); ++e) {
      if (E(e, 0) != std::floor(E(e, 0)) || E(e, 1) != std::floor(E(e, 1)))
        throw InputError("dist: graph node indices must be integers");
      edges.push_back({static_cast<Index>(E(e, 0)), static_cast<Index>(E(e, 1)), E(e, 2)});
    }
    const WeightedGraph G(a.size(), edges);
    const GraphFlowResult r = w1_graph_flow(a - b, G);
    value = r.value;
    Matrix flow = Matrix::Zero(a.size(), a.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      flow(edges[e].i, edges[e].j) += r.flow.forward[static_cast<Index>(e)];
      flow(edges[e].j, edges[e].i) += r.flow.backward[static_cast<Index>(e)];
    }
    plan = std::move(flow);
    out["divergence_residual"] = (r.flow.divergence(G) - (a - b)).lpNorm<1>();
  } else {
    throw InputError("dist: unknown method '" + m + "'");
  }

  out["value"] = value;
  out["iterations"] = iterations;
  out["converged"] = converged;
  out["marginal_residuals"] = residual ? residual_json(*residual) : json(nullptr);
  out["runtime_ms"] = clock.runtime(c.timing);
  out["config"] = config_json(c, effective_max_iter);
  out["config"]["p"] = f.p;
  if (!trace.is_null()) out["trace"] = trace;
  emit(out, c.out);
  if (!f.emit_plan.empty()) {
    if (!plan) throw InputError("dist: method '" + m + "' produces no plan");
    io::write_text(f.emit_plan, io::plan_triplets_csv(*plan));
  }
  return converged ? kExitOk : kExitNoConvergence;
}

// ---------------------------------------------------------------------------
// barycenter
// ---------------------------------------------------------------------------

struct BarycenterFlags {
  std::vector<std::string> inputs;
  std::vector<double> lambda;
  double epsilon = 1e-3;
  double p = 2.0;
  std::string report;
};

int cmd_barycenter(const BarycenterFlags& f, const CommonFlags& c) {
  const Stopwatch clock;
  if (f.inputs.empty()) throw InputError("barycenter: need at least one --input");
  std::vector<io::Raster> rasters;
  for (const std::string& path : f.inputs) rasters.push_back(io::read_raster(path));
  for (const io::Raster& r : rasters)
    if (r.n1 != rasters[0].n1 || r.n2 != rasters[0].n2) throw InputError("barycenter: inputs have different shapes");
  const auto S = static_cast<Index>(rasters.size());
  Vector lambda;
  const bool default_lambda = f.lambda.empty();
  if (default_lambda) {
    lambda = Vector::Constant(S, 1.0 / static_cast<double>(S));
  } else {
    if (static_cast<Index>(f.lambda.size()) != S) throw InputError("barycenter: one --lambda per input");
    lambda = Eigen::Map<const Vector>(f.lambda.data(), S);
  }
  const Index n1 = rasters[0].n1, n2 = rasters[0].n2;
  const Matrix x = grid_centres(n1, n2);
  const CostMatrix C = power_cost(x, x, f.p);
  BarycenterProblem problem;
  for (const io::Raster& r : rasters) {
    problem.inputs.push_back(r.values);
    problem.costs.push_back(C);
  }
  problem.lambda = lambda;
  problem.epsilon = f.epsilon;
  BarycenterOptions o;
  o.tol = std::max(c.tol, 1e-14);
  if (c.max_iter > 0) o.max_cycles = c.max_iter;
  const BarycenterResult r = entropic_barycenter(problem, o);

  const Vector& a = r.barycenter.weights();
  io::write_text(c.out.empty() ? "barycenter.csv" : c.out, n2 == 1 ? io::histogram_csv(a) : io::raster_csv(a, n1, n2));

  json rep;
  rep["schema"] = 1;
  rep["command"] = "barycenter";
  rep["method"] = "entropic";
  rep["inputs"] = f.inputs;
  rep["lambda"] = to_json(lambda);
  rep["lambda_default"] = default_lambda;
  rep["epsilon"] = f.epsilon;
  rep["shape"] = {n1, n2};
  rep["iterations"] = r.report.cycles;
  rep["disagreement"] = r.report.disagreement;
  rep["converged"] = r.report.converged;
  rep["runtime_ms"] = clock.runtime(c.timing);
  rep["config"] = config_json(c, o.max_cycles);
  rep["config"]["p"] = f.p;
  if (c.emit_plot) rep["trace"] = {{"kind", "barycenter"}, {"disagreement", to_json(r.report.trace)}};
  emit(rep, f.report);
  return r.report.converged ? kExitOk : kExitNoConvergence;
}

// ---------------------------------------------------------------------------
// interpolate
// ---------------------------------------------------------------------------

struct InterpolateFlags {
  std::string method = "mccann";
  std::string a, b, x, y;
  long steps = 32;
  std::string out_dir = "snapshots";
  double gamma = 1.0 / 50.0;
  std::string report;
};

std::string snapshot_path(const std::string& dir, long k) {
  char name[64];
  std::snprintf(name, sizeof name, "snapshot_%04ld.csv", k);
  return (std::filesystem::path(dir) / name).string();
}

int cmd_interpolate(const InterpolateFlags& f, const CommonFlags& c) {
  const Stopwatch clock;
  if (f.steps < 1) throw InputError("interpolate: --steps must be >= 1");
  std::filesystem::create_directories(f.out_dir);
  json rep;
  rep["schema"] = 1;
  rep["command"] = "interpolate";
  rep["method"] = f.method;
  rep["steps"] = f.steps;
  bool converged = true;
  long effective_max_iter = c.max_iter;

  if (f.method == "mccann") {
    Matrix x, y;
    Vector a, b;
    if (!f.x.empty() && !f.y.empty()) {
      io::PointCloud px = io::read_points(f.x), py = io::read_points(f.y);
      x = std::move(px.points), a = std::move(px.weights);
      y = std::move(py.points), b = std::move(py.weights);
    } else if (!f.a.empty() && !f.b.empty()) {
      const io::Raster ra = io::read_raster(f.a), rb = io::read_raster(f.b);
      x = grid_centres(ra.n1, ra.n2), a = ra.values;
      y = grid_centres(rb.n1, rb.n2), b = rb.values;
    } else {
      throw InputError("interpolate: mccann needs --x/--y point files or --a/--b grids");
    }
    const DiscreteMeasure alpha = DiscreteMeasure::dropping_zeros(x, Histogram(a));
    const DiscreteMeasure beta = DiscreteMeasure::dropping_zeros(y, Histogram(b));
    const NetworkSimplexResult ot =
        network_simplex(alpha.weights().weights(), beta.weights().weights(), power_cost(alpha.points(), beta.points(), 2.0));
    rep["value"] = ot.value;
    json stems = json::array();
    for (long k = 0; k <= f.steps; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(f.steps);
      // The endpoints are the inputs themselves.
      const DiscreteMeasure mt = k == 0 ? alpha : k == f.steps ? beta : mccann_interpolate(ot.plan, alpha, beta, t);
      io::write_text(snapshot_path(f.out_dir, k), io::points_csv(mt.points(), mt.weights().weights()));
      if (c.emit_plot)
        for (Index i = 0; i < mt.size(); ++i) {
          json row = {t};
          for (Index d = 0; d < mt.dim(); ++d) row.push_back(mt.points()(i, d));
          row.push_back(mt.weights()[i]);
          stems.push_back(row);
        }
    }
    if (c.emit_plot) rep["trace"] = {{"kind", "mccann"}, {"dim", alpha.dim()}, {"stems", stems}};
  } else if (f.method == "dynamic") {
    if (f.a.empty() || f.b.empty()) throw InputError("interpolate: dynamic needs --a and --b grids");
    const io::Raster ra = io::read_raster(f.a), rb = io::read_raster(f.b);
    if (ra.n1 != rb.n1 || ra.n2 != rb.n2) throw InputError("interpolate: grids have different shapes");
    BenamouBrenierOptions o;
    o.T = f.steps;
    if (c.max_iter > 0) o.iterations = c.max_iter;
    o.gamma = f.gamma;
    o.threads = c.threads;
    o.record_trace = true;
    effective_max_iter = o.iterations;
    const BenamouBrenierResult r = benamou_brenier(ra.values, rb.values, ra.n1, ra.n2, o);
    const double residual = continuity_residual(r.field, ra.values, rb.values);
    const std::size_t L = r.trace.size();
    const double change = L >= 2 ? std::abs(r.trace[L - 1] - r.trace[L - 2]) / std::max(1.0, std::abs(r.trace[L - 1])) : 0.0;
    converged = std::isfinite(r.value) && residual <= 1e-8;
    for (long k = 0; k <= f.steps; ++k) {
      const Vector slice = k == 0 ? ra.values : k == f.steps ? rb.values : r.field.slice_mass(k);
      io::write_text(snapshot_path(f.out_dir, k),
                     ra.n2 == 1 ? io::histogram_csv(slice) : io::raster_csv(slice, ra.n1, ra.n2));
    }
    rep["value"] = r.value;
    rep["continuity_residual"] = residual;
    rep["objective_change"] = change;
    rep["gamma"] = f.gamma;
    rep["shape"] = {ra.n1, ra.n2};
    if (c.emit_plot) rep["trace"] = {{"kind", "dynamic"}, {"objective", to_json(r.trace)}};
  } else {
    throw InputError("interpolate: unknown method '" + f.method + "'");
  }
  rep["snapshots"] = f.steps + 1;
  rep["converged"] = converged;
  rep["runtime_ms"] = clock.runtime(c.timing);
  rep["config"] = config_json(c, effective_max_iter);
  emit(rep, f.report);
  return converged ? kExitOk : kExitNoConvergence;
}

// ---------------------------------------------------------------------------
// plotdata
// ---------------------------------------------------------------------------

struct PlotFlags {
  std::string trace;
  std::string out;
};

std::string numeric(const json& v) { return io::format_number(v.get<double>()); }

int cmd_plotdata(const PlotFlags& f) {
  std::ifstream in(f.trace);
  if (!in) throw InputError("plotdata: cannot open " + f.trace);
  json run;
  try {
    run = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("plotdata: " + f.trace + " is not valid JSON");
  }
  if (!run.contains("trace") || !run["trace"].is_object() || !run["trace"].contains("kind"))
    throw InputError("plotdata: " + f.trace + " has no trace (rerun with --emit-plot)");
  const json& t = run["trace"];
  const std::string kind = t["kind"].get<std::string>();
  std::string csv;
  auto series = [&](const char* header, const json& values, bool log10) {
    csv = header;
    long k = 0;
    for (const json& v : values) {
      const double x = v.get<double>();
      csv += std::to_string(++k) + "," + io::format_number(log10 ? std::log10(x) : x) + "\n";
    }
  };
  if (kind == "sinkhorn") {
    series("iteration,log10_residual\n", t.at("residual"), true);
  } else if (kind == "gw") {
    series("outer_iter,energy\n", t.at("energy"), false);
  } else if (kind == "barycenter") {
    series("cycle,log10_disagreement\n", t.at("disagreement"), true);
  } else if (kind == "dynamic") {
    series("iteration,objective\n", t.at("objective"), false);
  } else if (kind == "semidiscrete") {
    const json& nodes = t.at("nodes");
    const json& cell = t.at("cell");
    if (nodes.empty() || nodes.size() != cell.size()) throw InputError("plotdata: malformed semidiscrete trace");
    for (std::size_t d = 0; d < nodes[0].size(); ++d) csv += "node_x" + std::to_string(d) + ",";
    csv += "cell_index\n";
    for (std::size_t p = 0; p < nodes.size(); ++p) {
      for (const json& v : nodes[p]) csv += numeric(v) + ",";
      csv += std::to_string(cell[p].get<long>()) + "\n";
    }
  } else if (kind == "mccann") {
    const long dim = t.at("dim").get<long>();
    csv = "t,";
    for (long d = 0; d < dim; ++d) csv += "x" + std::to_string(d) + ",";
    csv += "mass\n";
    for (const json& row : t.at("stems")) {
      for (std::size_t k = 0; k < row.size(); ++k) csv += (k ? "," : "") + numeric(row[k]);
      csv += "\n";
    }
  } else {
    throw InputError("plotdata: unknown trace kind '" + kind + "'");
  }
  if (f.out.empty() || f.out == "-") std::cout << csv;
  else io::write_text(f.out, csv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"otkit: optimal transport solvers"};
  app.require_subcommand(1);

  CommonFlags common;
  try {
    common.threads = threads_from_env();
  } catch (const InputError& e) {
    std::cerr << "otkit: error: " << e.what() << "\n";
    return kExitInput;
  }

  DistFlags df;
  CLI::App* dist = app.add_subcommand("dist", "Transport cost between two measures");
  dist->add_option("--method", df.method,
                   "exact | dual_ascent | auction | sinkhorn | sinkhorn_log | unbalanced | w1d | sliced | gw | "
                   "semidiscrete | semidiscrete_sgd | graph")
      ->capture_default_str();
  dist->add_option("--a", df.a, "Source histogram CSV");
  dist->add_option("--b", df.b, "Target histogram CSV");
  dist->add_option("--x", df.x, "Source point CSV (coordinates, weight)");
  dist->add_option("--y", df.y, "Target point CSV (coordinates, weight)");
  dist->add_option("--cost", df.cost, "Dense cost CSV");
  dist->add_option("--graph", df.graph, "Edge list CSV i,j,w (0-based)");
  dist->add_option("--epsilon", df.epsilon, "Entropic regularization (cost units); auction accuracy")
      ->capture_default_str()->check(CLI::NonNegativeNumber);
  dist->add_option("--p", df.p, "Ground cost exponent, c = |x - y|^p")->capture_default_str()->check(CLI::PositiveNumber);
  dist->add_option("--tau", df.tau, "KL marginal penalty strength (unbalanced)")->capture_default_str()
      ->check(CLI::PositiveNumber);
  dist->add_option("--quad-n", df.quad_n, "Quadrature cells per axis (semidiscrete)")->capture_default_str();
  dist->add_option("--directions", df.directions, "Directions for sliced (0: 64 d)")->capture_default_str();
  dist->add_option("--emit-plan", df.emit_plan, "Write plan triplets i,j,mass to this CSV");
  dist->add_option("--out", common.out, "JSON output path (default: stdout)");
  add_common(dist, common);

  BarycenterFlags bf;
  CLI::App* bary = app.add_subcommand("barycenter", "Entropic barycenter of grid histograms");
  bary->add_option("--input", bf.inputs, "Histogram or raster CSV (repeat)")->required();
  bary->add_option("--lambda", bf.lambda, "Barycentric weight per input (default: uniform)");
  bary->add_option("--epsilon", bf.epsilon, "Entropic regularization on the unit grid")->capture_default_str()
      ->check(CLI::PositiveNumber);
  bary->add_option("--p", bf.p, "Ground cost exponent")->capture_default_str()->check(CLI::PositiveNumber);
  bary->add_option("--out", common.out, "Barycenter CSV path")->default_str("barycenter.csv");
  bary->add_option("--report", bf.report, "JSON report path (default: stdout)");
  add_common(bary, common);

  InterpolateFlags itf;
  CLI::App* interp = app.add_subcommand("interpolate", "Displacement interpolation snapshots");
  interp->add_option("--method", itf.method, "mccann | dynamic")->capture_default_str();
  interp->add_option("--a", itf.a, "Source histogram or raster CSV");
  interp->add_option("--b", itf.b, "Target histogram or raster CSV");
  interp->add_option("--x", itf.x, "Source point CSV (mccann)");
  interp->add_option("--y", itf.y, "Target point CSV (mccann)");
  interp->add_option("--steps", itf.steps, "Time steps T; writes T + 1 snapshots")->capture_default_str();
  interp->add_option("--out-dir", itf.out_dir, "Snapshot directory")->capture_default_str();
  interp->add_option("--gamma", itf.gamma, "Douglas-Rachford step (dynamic)")->capture_default_str()
      ->check(CLI::PositiveNumber);
  interp->add_option("--report", itf.report, "JSON report path (default: stdout)");
  add_common(interp, common);

  PlotFlags pf;
  CLI::App* plot = app.add_subcommand("plotdata", "CSV series from a run's JSON trace");
  plot->add_option("--trace", pf.trace, "JSON written by a run with --emit-plot")->required();
  plot->add_option("--out", pf.out, "CSV output path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (dist->parsed()) return cmd_dist(df, common);
    if (bary->parsed()) return cmd_barycenter(bf, common);
    if (interp->parsed()) return cmd_interpolate(itf, common);
    if (plot->parsed()) return cmd_plotdata(pf);
  } catch (const InputError& e) {
    std::cerr << "otkit: error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ConvergenceError& e) {
    std::cerr << "otkit: no convergence: " << e.what() << "\n";
    return kExitNoConvergence;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "otkit: error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
