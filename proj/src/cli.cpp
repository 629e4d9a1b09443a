#include "geotomo/cli.hpp"

#include <cmath>
#include <memory>
#include <ostream>
#include <random>

#include <Eigen/Dense>

#include "CLI11.hpp"
#include "geotomo/bundle.hpp"
#include "geotomo/config.hpp"
#include "geotomo/dnmap.hpp"
#include "geotomo/errors.hpp"
#include "geotomo/expr.hpp"
#include "geotomo/flow.hpp"
#include "geotomo/hilbert.hpp"
#include "geotomo/io.hpp"
#include "geotomo/transport.hpp"

namespace geotomo {

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr const char* kUsage =
    "usage: geotomo <subcommand> [flags]\n"
    "\n"
    "subcommands:\n"
    "  distances         boundary distance matrix (CSV)\n"
    "  scatter           scattering relation table (JSON)\n"
    "  xray              geodesic transform of a field expression (CSV)\n"
    "  istar-solve       constructive adjoint solve I* w = target (CSV)\n"
    "  check-commutator  transform/flow commutator refinement study (CSV)\n"
    "  check-identities  transform identity refinement study (CSV)\n"
    "  dn-extract        Dirichlet-to-Neumann extraction from scattering data (JSON)\n"
    "  dn-compare        compare two extracted Dirichlet-to-Neumann maps (JSON)\n"
    "  invert            conformal factor recovery from a distance matrix (CSV)\n"
    "  check-simple      convexity / conjugate-point / trapping diagnostic (JSON)\n"
    "  fold-scan         glancing-set fold diagnostic (CSV)\n"
    "\n"
    "run 'geotomo <subcommand> --help' for the flags of one subcommand\n";

// Session state shared by the metric-driven subcommands.  The chart keeps a
// pointer into the metric, so both live here together.
ExperimentConfig load_and_check(const std::string& path) {
  ExperimentConfig cfg = load_config(path);
  validate_config(cfg);
  return cfg;
}

struct Session {
  ExperimentConfig cfg;
  MetricField metric;
  std::unique_ptr<BoundaryChart> chart;

  explicit Session(const std::string& config_path)
      : cfg(load_and_check(config_path)),
        metric(make_metric(cfg)),
        chart(std::make_unique<BoundaryChart>(metric)) {}

  FlowOptions flow() const {
    FlowOptions o;
    o.step = cfg.step;
    return o;
  }
};

nlohmann::json meta_block(const ExperimentConfig& cfg, const std::string& sub) {
  nlohmann::json m;
  m["version"] = kVersion;
  m["subcommand"] = sub;
  m["config_hash"] = config_hash(cfg);
  m["metric_hash"] = metric_hash(cfg);
  m["seed"] = cfg.seed;
  m["grid"] = {{"ns", cfg.ns}, {"nphi", cfg.nphi}, {"nb", cfg.nb},
               {"nr", cfg.nr}, {"nth", cfg.nth}};
  m["solver"] = {{"step", cfg.step},     {"dt", cfg.dt},
                 {"cutoff", cfg.cutoff}, {"delta", cfg.delta},
                 {"cg_tol", cfg.cg_tol}, {"cg_max", cfg.cg_max}};
  return m;
}

// First line of every CSV artifact; a single-field comment record.
std::string csv_stamp(const ExperimentConfig& cfg, const std::string& sub) {
  return std::string("# geotomo ") + kVersion + " " + sub +
         " config_hash=" + config_hash(cfg) + " metric_hash=" + metric_hash(cfg) + "\n";
}

void write_csv_artifact(const std::string& path, const std::string& stamp,
                        const CsvRows& rows, const nlohmann::json& meta) {
  write_file(path, stamp + csv_encode(rows));
  write_json(path + ".meta.json", meta);
}

void emit_json(const std::string& path, const nlohmann::json& j, std::ostream& out) {
  if (path.empty())
    out << j.dump(2) << "\n";
  else
    write_json(path, j);
}

// Inverse pipelines refuse to run on metrics that fail the coarse
// simplicity diagnostic.
void require_simple(const Session& ses) {
  const SimpleReport rep = check_simple(ses.metric, *ses.chart, 24, 11, ses.flow());
  if (!rep.simple())
    throw NumericalError(std::string("metric failed the simplicity check (convex=") +
                         (rep.convex ? "true" : "false") +
                         ", no_conjugate=" + (rep.no_conjugate ? "true" : "false") +
                         ", trapped=" + (rep.trapped ? "true" : "false") + ")");
}

// Returns -1 to continue, otherwise the exit code (help or flag errors).
int parse_flags(CLI::App& app, const std::string& name, const std::vector<std::string>& rest,
                std::ostream& out, std::ostream& err) {
  const std::string prog = "geotomo " + name;
  std::vector<const char*> argv;
  argv.push_back(prog.c_str());
  for (const auto& a : rest) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "flag error: " << e.what() << "\n";
    return 2;
  }
  return -1;
}

void add_threads_flag(CLI::App& app, int& threads) {
  app.add_option("--threads", threads, "cap on the worker pool (0 = default)")
      ->envname("GEOTOMO_THREADS");
}

void check_threads(int threads) {
  if (threads < 0) throw ConfigError("must be non-negative", 0, "--threads");
}

double unit_real(std::mt19937_64& rng) {
  return 2.0 * ((rng() >> 11) * 0x1.0p-53) - 1.0;
}

// Inward fiber node, cell-centered like BoundaryFiberGrid.
double inward_phi_node(int j, int nphi) { return -0.5 * M_PI + (j + 0.5) * M_PI / nphi; }

// ---------------------------------------------------------------- distances

int cmd_distances(const std::vector<std::string>& rest, std::ostream& out, std::ostream& err) {
  std::string config_path, out_path;
  int ns_override = 0, threads = 0;
  CLI::App app{"boundary distance matrix between uniform anchors"};
  app.add_option("--config", config_path, "experiment config")->required();
  app.add_option("--out", out_path, "output CSV")->required();
  app.add_option("--ns", ns_override, "override the anchor count");
  add_threads_flag(app, threads);
  if (const int rc = parse_flags(app, "distances", rest, out, err); rc >= 0) return rc;
  check_threads(threads);

  Session ses(config_path);
  const int n = ns_override > 0 ? ns_override : ses.cfg.ns;
  if (n < 2) throw ConfigError("needs at least 2 anchors", 0, "--ns");

  const DistanceData data = boundary_distances(ses.metric, *ses.chart, n, ses.flow());

  CsvRows rows;
  std::vector<std::string> header;
  std::vector<double> svals;
  for (int i = 0; i < n; ++i) {
    svals.push_back(ses.chart->s_of_theta(data.theta[i]));
    header.push_back(format_double(svals.back()));
  }
  rows.push_back(header);
  for (int i = 0; i < n; ++i) {
    std::vector<std::string> row;
    for (int j = 0; j < n; ++j) row.push_back(format_double(data.d(i, j)));
    rows.push_back(row);
  }

  nlohmann::json meta = meta_block(ses.cfg, "distances");
  meta["anchors"] = n;
  meta["theta"] = data.theta;
  meta["s"] = svals;
  meta["length"] = ses.chart->length();
  write_csv_artifact(out_path, csv_stamp(ses.cfg, "distances"), rows, meta);
  return 0;
}

// ------------------------------------------------------------------ scatter

int cmd_scatter(const std::vector<std::string>& rest, std::ostream& out, std::ostream& err) {
  std::string config_path, out_path;
  int threads = 0;
  CLI::App app{"scattering relation tabulated on the inward grid"};
  app.add_option("--config", config_path, "experiment config")->required();
  app.add_option("--out", out_path, "output JSON")->required();
  add_threads_flag(app, threads);
  if (const int rc = parse_flags(app, "scatter", rest, out, err); rc >= 0) return rc;
  check_threads(threads);

  Session ses(config_path);
  const ScatterTable table(ses.metric, *ses.chart, ses.cfg.ns, ses.cfg.nphi, ses.flow());

  nlohmann::json j;
  j["meta"] = meta_block(ses.cfg, "scatter");
  j["length"] = table.length();
  nlohmann::json records = nlohmann::json::array();
  for (int i = 0; i < table.ns(); ++i)
    for (int jj = 0; jj < table.nphi(); ++jj) {
      const ScatterTable::Hit hit = table.row(i, jj);
      records.push_back({{"s", i * table.length() / table.ns()},
                         {"phi", inward_phi_node(jj, table.nphi())},
                         {"s_exit", hit.s},
                         {"phi_exit", hit.phi},
                         {"tau", hit.tau}});
    }
  j["records"] = records;
  emit_json(out_path, j, out);
  return 0;
}

// --------------------------------------------------------------------- xray

int cmd_xray(const std::vector<std::string>& rest, std::ostream& out, std::ostream& err) {
  std::string config_path, field, out_path;
  int threads = 0;
  CLI::App app{"geodesic transform of a field expression over the inward grid"};
  app.add_option("--config", config_path, "experiment config")->required();
  app.add_option("--field", field, "integrand expression in x, y")->required();
  app.add_option("--out", out_path, "output CSV")->required();
  add_threads_flag(app, threads);
  if (const int rc = parse_flags(app, "xray", rest, out, err); rc >= 0) return rc;
  check_threads(threads);

  Session ses(config_path);
  const Expr fe = Expr::parse(field);
  const std::function<double(Vec2, Vec2)> fn = [&](Vec2 p, Vec2) {
    return fe.eval(p.x, p.y);
  };

  const int ns = ses.cfg.ns, nphi = ses.cfg.nphi;
  const double L = ses.chart->length();
  CsvRows rows;
  std::vector<std::string> header{"s"};
  for (int j = 0; j < nphi; ++j) header.push_back(format_double(inward_phi_node(j, nphi)));
  rows.push_back(header);
  for (int i = 0; i < ns; ++i) {
    const double s = i * L / ns;
    std::vector<std::string> row{format_double(s)};
    for (int j = 0; j < nphi; ++j)
      row.push_back(format_double(
          xray(ses.metric, *ses.chart, fn, s, inward_phi_node(j, nphi), ses.flow())));
    rows.push_back(row);
  }

  nlohmann::json meta = meta_block(ses.cfg, "xray");
  meta["field"] = fe.pretty();
  meta["length"] = L;
  write_csv_artifact(out_path, csv_stamp(ses.cfg, "xray"), rows, meta);
  return 0;
}

// -------------------------------------------------------------- istar-solve

int cmd_istar_solve(const std::vector<std::string>& rest, std::ostream& out, std::ostream& err) {
  std::string config_path, target, out_path;
  int threads = 0;
  CLI::App app{"solve I* w = target constructively and emit the boundary data w"};
  app.add_option("--config", config_path, "experiment config")->required();
  app.add_option("--target", target, "target expression in x, y")->required();
  app.add_option("--out", out_path, "output CSV")->required();
  add_threads_flag(app, threads);
  if (const int rc = parse_flags(app, "istar-solve", rest, out, err); rc >= 0) return rc;
  check_threads(threads);

  Session ses(config_path);
  const Expr te = Expr::parse(target);
  require_simple(ses);

  const ScalarField h = ScalarField::sample(ses.cfg.nr, ses.cfg.nth, 1.0, [&](Vec2 p) {
    return te.eval(p.x, p.y);
  });
  IstarOptions opt;
  opt.delta = ses.cfg.delta;
  opt.cg_tol = ses.cfg.cg_tol;
  opt.cg_max = ses.cfg.cg_max;
  opt.ns_out = ses.cfg.ns;
  opt.nphi_out = ses.cfg.nphi;
  const IstarSolution sol = solve_istar(ses.metric, h, opt);

  CsvRows rows;
  std::vector<std::string> header{"s"};
  for (int j = 0; j < sol.w.nphi; ++j)
    header.push_back(format_double(sol.w.phi_node(j)));
  rows.push_back(header);
  for (int i = 0; i < sol.w.ns; ++i) {
    std::vector<std::string> row{format_double(sol.w.s_node(i))};
    for (int j = 0; j < sol.w.nphi; ++j) row.push_back(format_double(sol.w.at(i, j)));
    rows.push_back(row);
  }

  nlohmann::json meta = meta_block(ses.cfg, "istar-solve");
  meta["target"] = te.pretty();
  meta["normal_grid"] = {{"nr", opt.nr}, {"nth", opt.nth}, {"nb", opt.nb}};
  meta["residuals"] = {{"cg_iterations", sol.cg_iterations},
                       {"cg_residual", sol.cg_residual},
                       {"verify_residual", sol.verify_residual}};
  write_csv_artifact(out_path, csv_stamp(ses.cfg, "istar-solve"), rows, meta);
  return 0;
}

// --------------------------------------------------------- check-commutator

// Band-limited bundle function with seeded coefficients: fiber harmonics
// k <= 3 with quadratic spatial envelopes.
struct BandLimited {
  double c[4][5], s[4][5];

  explicit BandLimited(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (int k = 0; k < 4; ++k)
      for (int m = 0; m < 5; ++m) {
        c[k][m] = unit_real(rng);
        s[k][m] = unit_real(rng);
      }
  }

  double operator()(double x, double y, double beta) const {
    auto envelope = [&](const double* a) {
      return a[0] + a[1] * x + a[2] * y + a[3] * x * y + a[4] * (x * x - y * y);
    };
    double acc = envelope(c[0]);
    for (int k = 1; k < 4; ++k)
      acc += envelope(c[k]) * std::cos(k * beta) + envelope(s[k]) * std::sin(k * beta);
    return acc;
  }

  BundleGrid sample(int nr, int nth, int nb) const {
    BundleGrid g = BundleGrid::zeros(nr, nth, nb);
    for (int i = 0; i < nr; ++i)
      for (int j = 0; j < nth; ++j)
        for (int k = 0; k < nb; ++k) {
          const double r = g.r_node(i), t = g.theta_node(j);
          g.at(i, j, k) = (*this)(r * std::cos(t), r * std::sin(t), g.beta_node(k));
        }
    return g;
  }
};

int cmd_check_commutator(const std::vector<std::string>& rest, std::ostream& out,
                         std::ostream& err) {
  std::string config_path, out_path;
  int refine = 3, threads = 0;
  CLI::App app{"commutator residual of the fiber transform and the flow derivative"};
  app.add_option("--config", config_path, "experiment config")->required();
  app.add_option("--refine", refine, "number of halving levels (default 3)");
  app.add_option("--out", out_path, "output CSV (default stdout)");
  add_threads_flag(app, threads);
  if (const int rc = parse_flags(app, "check-commutator", rest, out, err); rc >= 0) return rc;
  check_threads(threads);
  if (refine < 1 || refine > 4)
    throw ConfigError("must lie in 1..4", 0, "--refine");

  Session ses(config_path);
  const BandLimited u(ses.cfg.seed);

  CsvRows rows;
  rows.push_back({"level", "nr", "nth", "nb", "dt", "dx", "full", "split_even", "split_odd"});
  std::vector<double> fulls;
  for (int level = 0; level < refine; ++level) {
    const int nr = 16 << level, nth = 32 << level, nb = 64 << level;
    DiffOptions opt;
    opt.dt = ses.cfg.dt / (1 << level);
    opt.dx = 0.8 * opt.dt;
    opt.substep = 0.5 * opt.dt;
    const BundleGrid grid = u.sample(nr, nth, nb);
    const CommutatorReport rep = commutator_residual(ses.metric, grid, opt);
    fulls.push_back(rep.full);
    rows.push_back({std::to_string(level), std::to_string(nr), std::to_string(nth),
                    std::to_string(nb), format_double(opt.dt), format_double(opt.dx),
                    format_double(rep.full), format_double(rep.split_even),
                    format_double(rep.split_odd)});
  }

  nlohmann::json meta = meta_block(ses.cfg, "check-commutator");
  std::vector<double> ratios;
  for (size_t i = 1; i < fulls.size(); ++i) ratios.push_back(fulls[i - 1] / fulls[i]);
  meta["ratios"] = ratios;

  const std::string stamp = csv_stamp(ses.cfg, "check-commutator");
  if (out_path.empty()) {
    out << stamp << csv_encode(rows);
  } else {
    write_csv_artifact(out_path, stamp, rows, meta);
  }
  return 0;
}

// --------------------------------------------------------- check-identities

// Smooth phase-space test function with genuine direction dependence.
double phase_test_fn(Vec2 x, Vec2 v) {
  const double dx = x.x - 0.15, dy = x.y + 0.1;
  const double bump = std::exp(-(dx * dx + dy * dy) / 0.5);
  return bump * (0.4 + 0.7 * v.x - 0.3 * v.y + 0.5 * (v.x * v.x - v.y * v.y)) +
         0.3 * x.x * x.y;
}

int cmd_check_identities(const std::vector<std::string>& rest, std::ostream& out,
                         std::ostream& err) {
  std::string config_path, out_path;
  int refine = 3, threads = 0;
  CLI::App app{"transform of the flow derivative against its two boundary forms"};
  app.add_option("--config", config_path, "experiment config")->required();
  app.add_option("--refine", refine, "number of halving levels (default 3)");
  app.add_option("--out", out_path, "output CSV (default stdout)");
  add_threads_flag(app, threads);
  if (const int rc = parse_flags(app, "check-identities", rest, out, err); rc >= 0) return rc;
  check_threads(threads);
  if (refine < 1 || refine > 4)
    throw ConfigError("must lie in 1..4", 0, "--refine");

  Session ses(config_path);
  if ((ses.cfg.ns >> (refine - 1)) < 8 || (ses.cfg.nphi >> (refine - 1)) < 8)
    throw ConfigError("too many levels for grid.ns / grid.nphi", 0, "--refine");

  // the derivative probes flow slightly past the boundary, so it runs on an
  // enlarged copy of the metric with room for the coarsest increment
  const double dt_max = ses.cfg.dt * (1 << (refine - 1));
  const MetricField big = ses.metric.with_radius(1.0 + dt_max + 0.1);
  const double L = ses.chart->length();

  std::vector<std::pair<double, double>> samples;
  for (int i = 0; i < 10; ++i)
    samples.push_back({(i + 0.3) * L / 10.0, -1.1 + 2.2 * i / 9.0});

  CsvRows rows;
  rows.push_back({"level", "dt", "ns", "nphi", "res_scatter", "res_continuation"});
  std::vector<double> res_a, res_c;
  for (int level = 0; level < refine; ++level) {
    const double dt = ses.cfg.dt * (1 << (refine - 1 - level));
    const int ns = ses.cfg.ns >> (refine - 1 - level);
    const int nphi = ses.cfg.nphi >> (refine - 1 - level);

    FlowOptions sub;
    sub.step = dt / 4.0;
    const std::function<double(Vec2, Vec2)> flow_derivative = [&](Vec2 x, Vec2 v) {
      const PhasePoint fwd = flow_time(big, x, v, dt, sub);
      const PhasePoint bwd = flow_time(big, x, v, -dt, sub);
      return (phase_test_fn(fwd.x, fwd.v) - phase_test_fn(bwd.x, bwd.v)) / (2.0 * dt);
    };

    const ScatterTable table(ses.metric, *ses.chart, ns, nphi, ses.flow());
    BoundaryFiberGrid f0 = BoundaryFiberGrid::zeros(BoundaryFiberGrid::Half::Full, ns, nphi, L);
    for (int i = 0; i < ns; ++i)
      for (int j = 0; j < f0.nodes_phi(); ++j) {
        const double s = f0.s_node(i), phi = f0.phi_node(j);
        f0.at(i, j) = phase_test_fn(ses.chart->point_of_s(s), ses.chart->direction(s, phi));
      }
    const BoundaryFiberGrid jump = a_star_minus(table, f0);

    double ra = 0.0, rc = 0.0;
    for (const auto& [s, phi] : samples) {
      const double lhs = xray(ses.metric, *ses.chart, flow_derivative, s, phi, ses.flow());

      const Vec2 x0 = ses.chart->point_of_s(s);
      const Vec2 v0 = ses.chart->direction(s, phi);
      const ExitState ex = exit_state(ses.metric, x0, v0, ses.flow());
      const double direct = phase_test_fn(ex.p.x, ex.p.v) - phase_test_fn(x0, v0);
      ra = std::max(ra, std::abs(lhs - direct));
      rc = std::max(rc, std::abs(lhs + jump.interp(s, phi)));
    }
    res_a.push_back(ra);
    res_c.push_back(rc);
    rows.push_back({std::to_string(level), format_double(dt), std::to_string(ns),
                    std::to_string(nphi), format_double(ra), format_double(rc)});
  }

  auto orders = [](const std::vector<double>& r) {
    std::vector<double> o;
    for (size_t i = 1; i < r.size(); ++i) o.push_back(std::log2(r[i - 1] / r[i]));
    return o;
  };
  nlohmann::json meta = meta_block(ses.cfg, "check-identities");
  meta["orders"] = {{"scatter", orders(res_a)}, {"continuation", orders(res_c)}};

  const std::string stamp = csv_stamp(ses.cfg, "check-identities");
  if (out_path.empty()) {
    out << stamp << csv_encode(rows);
  } else {
    write_csv_artifact(out_path, stamp, rows, meta);
  }
  return 0;
}

// --------------------------------------------------------------- dn-extract

// Fourier coefficient of a trace in the {1, cos k, sin k} basis.
double basis_coefficient(const BoundaryTrace& g, int i) {
  const int n = static_cast<int>(g.v.size());
  const double h = g.length / n;
  double acc = 0.0;
  for (int t = 0; t < n; ++t) {
    const double s = g.s_node(t);
    double b = 1.0;
    if (i > 0) {
      const int k = (i + 1) / 2;
      const double om = 2.0 * M_PI * k / g.length;
      b = (i % 2 == 1) ? std::cos(om * s) : std::sin(om * s);
    }
    acc += g.v[t] * b * h;
  }
  return (i == 0 ? 1.0 : 2.0) * acc / g.length;
}

std::vector<std::string> basis_labels(int kmax) {
  std::vector<std::string> labels{"const"};
  for (int k = 1; k <= kmax; ++k) {
    labels.push_back("cos" + std::to_string(k));
    labels.push_back("sin" + std::to_string(k));
  }
  return labels;
}

int cmd_dn_extract(const std::vector<std::string>& rest, std::ostream& out, std::ostream& err) {
  std::string config_path, out_path;
  int kmax = 4, threads = 0;
  CLI::App app{"Dirichlet-to-Neumann matrix recovered from the scattering relation"};
  app.add_option("--config", config_path, "experiment config")->required();
  app.add_option("--kmax", kmax, "highest Fourier mode (default 4)");
  app.add_option("--out", out_path, "output JSON")->required();
  add_threads_flag(app, threads);
  if (const int rc = parse_flags(app, "dn-extract", rest, out, err); rc >= 0) return rc;
  check_threads(threads);

  Session ses(config_path);
  if (kmax < 1 || 4 * kmax > ses.cfg.ns)
    throw ConfigError("needs 1 <= kmax <= grid.ns / 4", 0, "--kmax");
  require_simple(ses);

  const ScatterTable table(ses.metric, *ses.chart, ses.cfg.ns, ses.cfg.nphi, ses.flow());
  DnExtractOptions opt;
  opt.kmax = kmax;
  opt.wsolve.svd_cutoff = ses.cfg.cutoff;
  const DnColumns cols = extract_dn(table, opt);

  const int m = 2 * kmax + 1;
  nlohmann::json matrix = nlohmann::json::array();
  for (int i = 0; i < m; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m; ++j) row.push_back(basis_coefficient(cols.image[j], i));
    matrix.push_back(row);
  }

  nlohmann::json j;
  j["meta"] = meta_block(ses.cfg, "dn-extract");
  j["kmax"] = kmax;
  j["length"] = cols.length;
  j["basis"] = basis_labels(kmax);
  j["matrix"] = matrix;
  j["residuals"] = cols.residuals;
  j["euclid_gap"] = dn_subspace_gap(cols, kmax);
  emit_json(out_path, j, out);
  return 0;
}

// --------------------------------------------------------------- dn-compare

int cmd_dn_compare(const std::vector<std::string>& rest, std::ostream& out, std::ostream& err) {
  std::string a_path, b_path, out_path;
  double tol = 0.05;
  int threads = 0;
  CLI::App app{"compare two extracted Dirichlet-to-Neumann matrices"};
  app.add_option("--a", a_path, "first dn-extract artifact")->required();
  app.add_option("--b", b_path, "second dn-extract artifact")->required();
  app.add_option("--tol", tol, "spectral-norm tolerance (default 0.05)");
  app.add_option("--out", out_path, "report JSON (default stdout)");
  add_threads_flag(app, threads);
  if (const int rc = parse_flags(app, "dn-compare", rest, out, err); rc >= 0) return rc;
  check_threads(threads);
  if (!(tol > 0.0)) throw ConfigError("must be positive", 0, "--tol");

  const nlohmann::json a = read_json(a_path);
  const nlohmann::json b = read_json(b_path);
  for (const auto* doc : {&a, &b})
    if (!doc->contains("meta") || !(*doc)["meta"].contains("metric_hash") ||
        !doc->contains("matrix") || !doc->contains("kmax"))
      throw ConfigError("artifact is not a dn-extract output");

  const std::string ha = a["meta"]["metric_hash"], hb = b["meta"]["metric_hash"];
  if (ha != hb)
    throw ConfigError("metric hash mismatch (" + ha + " vs " + hb +
                      "); refusing to compare");
  if (a["kmax"] != b["kmax"])
    throw ConfigError("kmax mismatch; refusing to compare");

  const int m = 2 * a["kmax"].get<int>() + 1;
  Eigen::MatrixXd diff(m, m);
  double max_abs = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      diff(i, j) = a["matrix"][i][j].get<double>() - b["matrix"][i][j].get<double>();
      max_abs = std::max(max_abs, std::abs(diff(i, j)));
    }
  const double spectral = diff.jacobiSvd().singularValues()(0);
  const bool match = spectral <= tol;

  nlohmann::json rep;
  rep["meta"] = {{"version", kVersion},
                 {"subcommand", "dn-compare"},
                 {"metric_hash", ha},
                 {"a_config_hash", a["meta"].value("config_hash", "")},
                 {"b_config_hash", b["meta"].value("config_hash", "")}};
  rep["max_abs_diff"] = max_abs;
  rep["spectral_diff"] = spectral;
  rep["tol"] = tol;
  rep["match"] = match;
  emit_json(out_path, rep, out);
  if (!match) {
    err << "matrices differ by " << spectral << " in spectral norm (tol " << tol << ")\n";
    return 3;
  }
  return 0;
}

// ------------------------------------------------------------------- invert

int cmd_invert(const std::vector<std::string>& rest, std::ostream& out, std::ostream& err) {
  std::string data_path, out_path, config_path;
  int threads = 0;
  CLI::App app{"recover a conformal factor from a boundary distance matrix"};
  app.add_option("--data", data_path, "distance CSV from the distances subcommand")->required();
  app.add_option("--out", out_path, "output CSV")->required();
  app.add_option("--config", config_path, "optional config, recorded in the metadata");
  add_threads_flag(app, threads);
  if (const int rc = parse_flags(app, "invert", rest, out, err); rc >= 0) return rc;
  check_threads(threads);

  const std::string text = read_file(data_path);
  CsvRows all = csv_decode(text);
  CsvRows body;
  for (auto& row : all)
    if (!(row.size() >= 1 && !row[0].empty() && row[0][0] == '#')) body.push_back(row);
  if (body.size() < 2) throw ConfigError("distance CSV needs a header row and a matrix");

  const size_t n = body[0].size();
  if (body.size() != n + 1)
    throw ConfigError("distance CSV must hold an n x n matrix under the header row");
  DistanceData data;
  data.d.resize(n, n);
  for (size_t i = 0; i < n; ++i) {
    data.theta.push_back(2.0 * M_PI * i / n);
    if (body[i + 1].size() != n)
      throw ConfigError("row " + std::to_string(i + 1) + " has the wrong width");
    for (size_t j = 0; j < n; ++j) {
      try {
        data.d(i, j) = std::stod(body[i + 1][j]);
      } catch (const std::exception&) {
        throw ConfigError("not a number: '" + body[i + 1][j] + "'");
      }
    }
  }

  const InvertOptions opt;
  const InversionResult res = invert_conformal(data, opt);

  CsvRows rows;
  std::vector<std::string> header{"r"};
  for (int j = 0; j < res.lambda.nth; ++j)
    header.push_back(format_double(res.lambda.theta_node(j)));
  rows.push_back(header);
  for (int i = 0; i < res.lambda.nr; ++i) {
    std::vector<std::string> row{format_double(res.lambda.r_node(i))};
    for (int j = 0; j < res.lambda.nth; ++j)
      row.push_back(format_double(res.lambda.at(i, j)));
    rows.push_back(row);
  }

  nlohmann::json meta;
  meta["version"] = kVersion;
  meta["subcommand"] = "invert";
  meta["data_hash"] = hash_hex(text);
  if (!config_path.empty()) {
    ExperimentConfig cfg = load_config(config_path);
    validate_config(cfg);
    meta["config_hash"] = config_hash(cfg);
    meta["metric_hash"] = metric_hash(cfg);
  }
  meta["anchors"] = n;
  meta["converged"] = res.converged;
  meta["iterations"] = res.residual_history.size();
  meta["residual_history"] = res.residual_history;
  meta["coeffs"] = res.coeffs;

  std::string stamp = std::string("# geotomo ") + kVersion +
                      " invert data_hash=" + hash_hex(text) + "\n";
  write_csv_artifact(out_path, stamp, rows, meta);
  return 0;
}

// ------------------------------------------------------------- check-simple

int cmd_check_simple(const std::vector<std::string>& rest, std::ostream& out,
                     std::ostream& err) {
  std::string config_path, out_path;
  int threads = 0;
  CLI::App app{"convexity, conjugate point, and trapping diagnostic"};
  app.add_option("--config", config_path, "experiment config")->required();
  app.add_option("--out", out_path, "report JSON (default stdout)");
  add_threads_flag(app, threads);
  if (const int rc = parse_flags(app, "check-simple", rest, out, err); rc >= 0) return rc;
  check_threads(threads);

  Session ses(config_path);
  const SimpleReport rep = check_simple(ses.metric, *ses.chart, 48, 21, ses.flow());

  nlohmann::json j;
  j["meta"] = meta_block(ses.cfg, "check-simple");
  j["report"] = {{"convex", rep.convex},
                 {"no_conjugate", rep.no_conjugate},
                 {"trapped", rep.trapped},
                 {"min_second_fundamental", rep.min_second_fundamental},
                 {"simple", rep.simple()}};
  emit_json(out_path, j, out);
  if (!rep.simple()) {
    err << "metric is not simple\n";
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------- fold-scan

int cmd_fold_scan(const std::vector<std::string>& rest, std::ostream& out, std::ostream& err) {
  std::string config_path, out_path;
  double s = 0.0;
  int count = 12, threads = 0;
  CLI::App app{"singular values of the scattering differential toward the glancing set"};
  app.add_option("--config", config_path, "experiment config")->required();
  app.add_option("--s", s, "boundary arclength of the scan (default 0)");
  app.add_option("--count", count, "number of scan points (default 12)");
  app.add_option("--out", out_path, "output CSV (default stdout)");
  add_threads_flag(app, threads);
  if (const int rc = parse_flags(app, "fold-scan", rest, out, err); rc >= 0) return rc;
  check_threads(threads);
  if (count < 3) throw ConfigError("needs at least 3 points", 0, "--count");

  Session ses(config_path);

  CsvRows rows;
  rows.push_back({"s", "phi", "gap", "sigma_min", "sigma_max"});
  std::vector<double> gaps, smin;
  double sigma_max_min = 1e300;
  for (int i = 0; i < count; ++i) {
    const double gap = 0.30 - (0.30 - 0.03) * i / (count - 1);
    const double phi = 0.5 * M_PI - gap;
    const FoldReport fr = fold_diagnostic(ses.metric, *ses.chart, s, phi, 0.2, 1e-4,
                                          ses.flow());
    gaps.push_back(gap);
    smin.push_back(fr.sigma_min);
    sigma_max_min = std::min(sigma_max_min, fr.sigma_max);
    rows.push_back({format_double(s), format_double(phi), format_double(gap),
                    format_double(fr.sigma_min), format_double(fr.sigma_max)});
  }

  // least-squares line sigma_min = slope * gap + intercept
  const int n = count;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    sx += gaps[i];
    sy += smin[i];
    sxx += gaps[i] * gaps[i];
    sxy += gaps[i] * smin[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  for (int i = 0; i < n; ++i) {
    const double fit = slope * gaps[i] + intercept;
    ss_res += (smin[i] - fit) * (smin[i] - fit);
    ss_tot += (smin[i] - sy / n) * (smin[i] - sy / n);
  }
  const double r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;

  nlohmann::json meta = meta_block(ses.cfg, "fold-scan");
  meta["fit"] = {{"slope", slope}, {"intercept", intercept}, {"r2", r2}};
  meta["sigma_max_min"] = sigma_max_min;

  const std::string stamp = csv_stamp(ses.cfg, "fold-scan");
  if (out_path.empty()) {
    out << stamp << csv_encode(rows);
  } else {
    write_csv_artifact(out_path, stamp, rows, meta);
  }
  return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    err << kUsage;
    return 64;
  }
  const std::string sub = args[0];
  if (sub == "--help" || sub == "-h" || sub == "help") {
    out << kUsage;
    return 0;
  }
  const std::vector<std::string> rest(args.begin() + 1, args.end());
  try {
    if (sub == "distances") return cmd_distances(rest, out, err);
    if (sub == "scatter") return cmd_scatter(rest, out, err);
    if (sub == "xray") return cmd_xray(rest, out, err);
    if (sub == "istar-solve") return cmd_istar_solve(rest, out, err);
    if (sub == "check-commutator") return cmd_check_commutator(rest, out, err);
    if (sub == "check-identities") return cmd_check_identities(rest, out, err);
    if (sub == "dn-extract") return cmd_dn_extract(rest, out, err);
    if (sub == "dn-compare") return cmd_dn_compare(rest, out, err);
    if (sub == "invert") return cmd_invert(rest, out, err);
    if (sub == "check-simple") return cmd_check_simple(rest, out, err);
    if (sub == "fold-scan") return cmd_fold_scan(rest, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    err << "expression error: " << e.what() << "\n";
    return 2;
  } catch (const EvalError& e) {
    err << "expression error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 3;
  }
  err << "unknown subcommand '" << sub << "'\n\n" << kUsage;
  return 64;
}

} // namespace geotomo
