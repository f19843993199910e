// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include "octmpc/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#ifndef OCTMPC_SCENARIO_DIR
#define OCTMPC_SCENARIO_DIR "scenarios"
#endif

using namespace octmpc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double max_abs(const MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

int g_jobs = 0;

struct Bundled {
  std::string file;
  ScenarioConfig cfg;
};

std::vector<Bundled> bundled_scenarios(const std::string& dir) {
  std::vector<Bundled> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    out.push_back({e.path().filename().string(), load_scenario(e.path().string())});
  }
  std::sort(out.begin(), out.end(), [](const Bundled& a, const Bundled& b) { return a.file < b.file; });
  return out;
}

// System 1 with N = 10 and the full 50 x 50 grid, shared by several criteria.
struct System1 {
  ScenarioConfig cfg;
  OfflineDesign design;
  std::unique_ptr<MpcController> tmpc, oct, fpd;
  RoaReport roa;
  bool roa_done = false;

  const RoaReport& grid_roa() {
    if (!roa_done) {
      roa = estimate_roa({tmpc.get(), oct.get(), fpd.get()}, cfg.grid, g_jobs);
      roa_done = true;
    }
    return roa;
  }

  std::vector<VectorXd> feasible_points(const std::vector<std::string>& names) {
    const auto& r = grid_roa();
    std::vector<VectorXd> pts;
    for (int p = 0; p < r.grid.size(); ++p) {
      bool all = true;
      for (const auto& n : names) all = all && r.feasible[static_cast<std::size_t>(r.index_of(n))][static_cast<std::size_t>(p)];
      if (all) pts.push_back(r.grid.point(p, r.nx));
    }
    return pts;
  }
};

std::unique_ptr<System1> load_system1(const std::string& dir) {
  auto s = std::make_unique<System1>();
  s->cfg = load_scenario(dir + "/system1.json");
  s->design = design_offline(s->cfg.system, s->cfg.weights, s->cfg.horizon, s->cfg.design);
  auto make = [&](ControllerKind k) {
    return std::make_unique<MpcController>(make_controller(k, s->cfg.system, s->cfg.weights, s->design));
  };
  s->tmpc = make(ControllerKind::kTmpc);
  s->oct = make(ControllerKind::kOct);
  s->fpd = make(ControllerKind::kFpd);
  return s;
}

// max over all vertex combinations of the short disturbance stack, per row
VectorXd brute_force_tightening(const MatrixXd& rows, const Polytope& W, int N) {
  const auto verts = vertices(W);
  const int nw = W.dim();
  VectorXd out = VectorXd::Constant(rows.rows(), -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> pick(static_cast<std::size_t>(N - 1), 0);
  std::function<void(int)> rec = [&](int k) {
    if (k == N - 1) {
      VectorXd w((N - 1) * nw);
      for (int l = 0; l < N - 1; ++l) w.segment(l * nw, nw) = verts[pick[static_cast<std::size_t>(l)]];
      out = out.cwiseMax(rows * w);
      return;
    }
    for (std::size_t v = 0; v < verts.size(); ++v) {
      pick[static_cast<std::size_t>(k)] = v;
      rec(k + 1);
    }
  };
  rec(0);
  return out;
}

Outcome roa_nesting(System1& s) {
  const auto& r = s.grid_roa();
  const int t = r.counts[0], o = r.counts[1], f = r.counts[2];
  int tmpc_not_oct = 0, oct_not_fpd = 0;
  for (const auto& v : r.violations) {
    tmpc_not_oct += v.inner == "tmpc" && v.outer == "oct";
    oct_not_fpd += v.inner == "oct" && v.outer == "fpd";
  }
  const bool pass = t <= o && o <= f && o >= t + 1 && tmpc_not_oct == 0;
  return {pass, fmt("%d points: tmpc %d <= oct %d <= fpd %d; tmpc-but-not-oct points %d; oct-but-not-fpd points %d",
                    r.grid.size(), t, o, f, tmpc_not_oct, oct_not_fpd)};
}

Outcome fallback_n15(const std::string& dir) {
  auto cfg = load_scenario(dir + "/system1_n15.json");
  if (cfg.design.tightening.fallback != Fallback::kCapByTmpc || cfg.horizon != 15) {
    return {false, "system1_n15 scenario must use N = 15 with the TMPC cap"};
  }
  const auto d = design_offline(cfg.system, cfg.weights, cfg.horizon, cfg.design);
  const auto tmpc = make_controller(ControllerKind::kTmpc, cfg.system, cfg.weights, d);
  const auto oct = make_controller(ControllerKind::kOct, cfg.system, cfg.weights, d);
  const auto r = estimate_roa({&tmpc, &oct}, cfg.grid, g_jobs);
  return {r.violations.empty(), fmt("%d points: tmpc %d, oct %d, tmpc-but-not-oct points %zu", cfg.grid.size(),
                                    r.counts[0], r.counts[1], r.violations.size())};
}

Outcome size_parity(System1& s) {
  const auto& sys = s.cfg.system;
  const int nx = sys.nx(), nu = sys.nu(), nc = sys.nc(), nd = sys.W.num_rows();
  bool pass = true;
  std::ostringstream os;
  std::vector<long> fpd_vars;
  for (int N : {5, 10, 15}) {
    const auto d = design_offline(sys, s.cfg.weights, N, s.cfg.design);
    const auto o = make_controller(ControllerKind::kOct, sys, s.cfg.weights, d).size();
    const auto t = make_controller(ControllerKind::kTmpc, sys, s.cfg.weights, d).size();
    const auto f = make_controller(ControllerKind::kFpd, sys, s.cfg.weights, d).size();
    const int nY = d.fpd_terminal_set.num_rows();
    const long formula = static_cast<long>(N) * (nx + nu) + static_cast<long>(nu) * nx * N * (N - 1) / 2 +
                         static_cast<long>(nd) * (static_cast<long>(nc) * N * (N - 1) / 2 + static_cast<long>(nY) * N);
    pass = pass && o.variables == t.variables && o.equalities == t.equalities && o.inequalities == t.inequalities &&
           f.variables > o.variables && f.variables == formula;
    fpd_vars.push_back(f.variables);
    os << "N=" << N << " oct/tmpc " << o.variables << "/" << t.variables << " vars " << o.constraints() << "/"
       << t.constraints() << " cons, fpd " << f.variables << " vars; ";
  }
  // second difference of a N^2 + b N over N = 5, 10, 15 is 50 a
  const long second = fpd_vars[2] - 2 * fpd_vars[1] + fpd_vars[0];
  const long expected = 25L * (static_cast<long>(nu) * nx + static_cast<long>(nd) * nc);
  pass = pass && second == expected && second > 0;
  os << "fpd second difference " << second << " (quadratic term predicts " << expected << ")";
  return {pass, os.str()};
}

Outcome timing_ratio(System1& s) {
  const auto pts = s.feasible_points({"oct", "fpd"});
  const auto stats = timing_report({s.oct.get(), s.fpd.get()}, pts);
  const double ratio = stats[0].mean > 0.0 ? stats[1].mean / stats[0].mean : 0.0;
  return {ratio >= 3.0 && stats[0].samples > 0,
          fmt("%zu common points: oct mean %.3f ms, fpd mean %.3f ms, ratio %.1f", pts.size(), 1e3 * stats[0].mean,
              1e3 * stats[1].mean, ratio)};
}

Outcome cost_parity(System1& s) {
  std::vector<VectorXd> starts;
  const auto& g = s.cfg.costs.grid;
  for (int p = 0; p < g.size(); ++p) starts.push_back(g.point(p, s.cfg.system.nx()));
  const auto pts = compare_costs(*s.tmpc, *s.oct, s.cfg.system, s.cfg.weights, starts, 50, s.cfg.costs.steps,
                                 s.cfg.costs.seed, g_jobs);
  int both = 0, within = 0, tight = 0;
  double lo = 1e300, hi = 0.0;
  for (const auto& p : pts) {
    if (!(p.feasible_a && p.feasible_b)) continue;
    ++both;
    within += std::abs(p.ratio - 1.0) <= 0.03;
    tight += std::abs(p.ratio - 1.0) <= 0.005;
    lo = std::min(lo, p.ratio);
    hi = std::max(hi, p.ratio);
  }
  const bool pass = both > 0 && within >= 0.95 * both;
  return {pass, fmt("%d common starts on a %d-point grid, 50 runs x %d steps: %d within 3%%, %d within 0.5%%, "
                    "ratio range [%.4f, %.4f]",
                    both, g.size(), s.cfg.costs.steps, within, tight, both ? lo : 0.0, hi)};
}

Outcome recursive_feasibility(System1& s) {
  auto starts = s.feasible_points({"oct"});
  std::mt19937_64 rng(2024);
  std::shuffle(starts.begin(), starts.end(), rng);
  const int runs = 84, steps = 60;
  const auto uni = DisturbanceSource::uniform(s.cfg.system.W);
  const auto vtx = DisturbanceSource::vertex(s.cfg.system.W);
  std::vector<int> done(2 * runs, 0), viol(2 * runs, 0);
  std::vector<std::string> errors(2 * runs);
  parallel_for(2 * runs, g_jobs, [&](int i) {
    const auto& src = i < runs ? uni : vtx;
    const VectorXd& x0 = starts[static_cast<std::size_t>(i % runs) % starts.size()];
    try {
      const auto tr = simulate(*s.oct, s.cfg.system, s.cfg.weights, x0, src,
                               {steps, derive_seed(11, static_cast<std::uint64_t>(i), 0), 0.0});
      done[static_cast<std::size_t>(i)] = tr.steps();
      for (int k = 0; k < tr.steps(); ++k) {
        viol[static_cast<std::size_t>(i)] += s.cfg.system.constraint_violation(tr.x.col(k), tr.u.col(k)) > 1e-6;
      }
    } catch (const SimulationError& e) {
      done[static_cast<std::size_t>(i)] = e.trace().steps();
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  });
  int total = 0, violations = 0, infeasible = 0;
  for (int i = 0; i < 2 * runs; ++i) {
    total += done[static_cast<std::size_t>(i)];
    violations += viol[static_cast<std::size_t>(i)];
    infeasible += !errors[static_cast<std::size_t>(i)].empty();
  }
  return {total >= 10000 && violations == 0 && infeasible == 0,
          fmt("%d closed-loop steps (%d uniform + %d vertex runs): %d infeasible solves, %d violations > 1e-6", total,
              runs, runs, infeasible, violations)};
}

Outcome shift_candidate_property(System1& s) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> U(-25.0, 25.0);
  const auto verts = vertices(s.cfg.system.W);
  const auto& sys = s.cfg.system;
  int states = 0, checks = 0;
  double worst = 0.0, mismatch = 0.0;
  while (states < 200) {
    const VectorXd x = Eigen::Vector2d(U(rng), U(rng));
    const auto d = s.oct->step(x);
    if (!d.feasible) continue;
    ++states;
    for (const auto& w : verts) {
      const VectorXd next = sys.step(x, d.u, w);
      const MpcPlan cand = shift_candidate(sys, s.design, d.plan, w);
      mismatch = std::max(mismatch, (cand.x.col(0) - next).lpNorm<Eigen::Infinity>());
      worst = std::max(worst, s.oct->plan_violation(next, cand));
      ++checks;
    }
  }
  return {worst <= 1e-6 && mismatch <= 1e-9,
          fmt("%d states x %zu vertices = %d candidates, worst violation %.2e", states, verts.size(), checks, worst)};
}

struct DesignedScenario {
  std::string name;
  LinearSystem sys;
  CostWeights weights;
  OfflineDesign design;
};

Outcome tightening_recursion(const std::vector<DesignedScenario>& all) {
  double worst = 0.0;
  std::ostringstream os;
  for (const auto& s : all) {
    const auto& d = s.design;
    const int N = d.N;
    const auto phi = error_response(d.M, s.sys);
    const auto wv = vertices(s.sys.W);
    double e = 0.0;
    for (int i = 0; i < N - 1; ++i) {
      const MatrixXd row = (s.sys.F * phi[static_cast<std::size_t>(i)] + s.sys.G * d.M.block(i + 1)) * s.sys.Bw;
      VectorXd best = VectorXd::Constant(s.sys.nc(), -1e300);
      for (const auto& v : wv) best = best.cwiseMax(row * v);
      e = std::max(e, (d.t.stage(i + 1) - d.t.stage(i) - best).cwiseAbs().maxCoeff());
    }
    worst = std::max(worst, e);
    os << s.name << " " << fmt("%.1e", e) << "; ";
  }
  return {worst <= 1e-6, "max |t_{i+1} - t_i - support| per scenario: " + os.str()};
}

Outcome oracle_equivalence(const std::vector<Bundled>& bundled) {
  double worst = 0.0;
  int designs = 0;
  std::ostringstream os;
  for (const auto& b : bundled) {
    const auto& sys = b.cfg.system;
    if (sys.nx() > 2) continue;
    for (int N = 2; N <= 4; ++N) {
      const auto d = design_offline(sys, b.cfg.weights, N, b.cfg.design);
      const MatrixXd rows = tightening_row_matrix(d.M, sys, build_prediction(sys, N));
      for (const auto* tv : {&d.t, &d.t_tmpc}) {
        const MatrixXd r = tv == &d.t ? rows : tightening_row_matrix(tmpc_feedback(d.terminal.K_f, sys, N), sys,
                                                                       build_prediction(sys, N));
        worst = std::max(worst, (tv->t - brute_force_tightening(r, sys.W, N)).cwiseAbs().maxCoeff());
      }
      ++designs;
    }
    os << b.cfg.name << " ";
  }
  return {designs > 0 && worst <= 1e-6,
          fmt("%d designs (N = 2..4) on ", designs) + os.str() + fmt("max deviation %.2e", worst)};
}

Outcome terminal_ingredients(const std::vector<DesignedScenario>& all) {
  double lyap = 0.0, eq17 = 0.0, sampled = -std::numeric_limits<double>::infinity();
  int samples = 0;
  for (const auto& s : all) {
    const auto& d = s.design;
    const auto& sys = s.sys;
    const int N = d.N;
    lyap = std::max(lyap, lyapunov_residual(sys, s.weights, d.terminal.K_f, d.terminal.P));
    const auto phi = error_response(d.M, sys);
    const MatrixXd& D = sys.W.normals();
    const VectorXd& dd = sys.W.offsets();
    eq17 = std::max({eq17, -d.t.Lambda1.minCoeff(), -d.t.Lambda2.minCoeff(),
                     max_abs(d.t.Lambda1 * D - (sys.F * phi[N - 1] + sys.G * d.M.terminal) * sys.Bw),
                     max_abs(d.t.Lambda2 * D - d.terminal.Y() * phi[N] * sys.Bw),
                     (d.t.Lambda1 * dd + d.terminal.c_F - (sys.b - d.t.stage(N - 1))).maxCoeff(),
                     (d.t.Lambda2 * dd + d.terminal.c_Y - d.terminal.z()).maxCoeff()});
    std::mt19937_64 rng(5);
    const auto wv = vertices(sys.W);
    auto pts = sample_points(d.terminal.X_T, 500, rng);
    const MatrixXd Acl = sys.A + sys.B * d.terminal.K_f;
    for (const auto& x : pts) {
      for (const auto& w : wv) {
        const VectorXd xs = x + phi[N - 1] * sys.Bw * w;
        const VectorXd us = d.terminal.K_f * x + d.M.terminal * sys.Bw * w;
        sampled = std::max(sampled, (sys.F * xs + sys.G * us - (sys.b - d.t.stage(N - 1))).maxCoeff());
        const VectorXd xn = Acl * x + phi[N] * sys.Bw * w;
        sampled = std::max(sampled, (d.terminal.Y() * xn - d.terminal.z()).maxCoeff());
        ++samples;
      }
    }
  }
  return {lyap <= 1e-6 && eq17 <= 1e-6 && sampled <= 1e-6,
          fmt("%zu designs: Lyapunov residual %.1e, terminal dual conditions %.1e, %d sampled (x, w) pairs worst slack %.2e",
              all.size(), lyap, eq17, samples, sampled)};
}

Outcome dominance(const std::vector<DesignedScenario>& all) {
  bool pass = true;
  std::ostringstream os;
  for (const auto& s : all) {
    const double a = s.design.t.norm(), b = s.design.t_tmpc.norm();
    pass = pass && a <= b + 1e-6;
    os << s.name << fmt(" %.4f <= %.4f; ", a, b);
  }
  return {pass, "||t||_2 vs ||t_tmpc||_2: " + os.str()};
}

Outcome undisturbed_convergence(System1& s) {
  const auto starts = s.feasible_points({"oct"});
  std::vector<double> final_norm(starts.size()), increase(starts.size());
  std::vector<int> steps(starts.size());
  parallel_for(static_cast<int>(starts.size()), g_jobs, [&](int i) {
    const auto tr = simulate(*s.oct, s.cfg.system, s.cfg.weights, starts[static_cast<std::size_t>(i)],
                             DisturbanceSource::zero(s.cfg.system.nw()), {200, 1, 1e-4});
    final_norm[static_cast<std::size_t>(i)] = tr.x.col(tr.steps()).lpNorm<Eigen::Infinity>();
    increase[static_cast<std::size_t>(i)] = tr.steps() > 1 ? max_objective_increase(tr) : 0.0;
    steps[static_cast<std::size_t>(i)] = tr.steps();
  });
  const double worst_norm = starts.empty() ? 0.0 : *std::max_element(final_norm.begin(), final_norm.end());
  const double worst_inc = starts.empty() ? 0.0 : *std::max_element(increase.begin(), increase.end());
  const int longest = starts.empty() ? 0 : *std::max_element(steps.begin(), steps.end());
  return {!starts.empty() && worst_norm < 1e-4 && worst_inc <= 1e-6,
          fmt("%zu feasible grid starts: slowest reached |x|inf < 1e-4 after %d steps (worst final %.3e), "
              "largest cost increase %.1e",
              starts.size(), longest, worst_norm, worst_inc)};
}

}  // namespace

int main(int argc, char** argv) {
  std::string dir = OCTMPC_SCENARIO_DIR;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--scenarios" && i + 1 < argc) dir = argv[++i];
    else if (a == "--jobs" && i + 1 < argc) g_jobs = std::stoi(argv[++i]);
  }

  int failures = 0;
  auto report = [&](int id, const std::string& title, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("%s criterion %2d  %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str(),
                sec);
    std::fflush(stdout);
  };

  std::unique_ptr<System1> s1;
  std::vector<Bundled> bundled;
  std::vector<DesignedScenario> designed;
  try {
    s1 = load_system1(dir);
    bundled = bundled_scenarios(dir);
    for (const auto& b : bundled) {
      designed.push_back({b.cfg.name, b.cfg.system, b.cfg.weights,
                          design_offline(b.cfg.system, b.cfg.weights, b.cfg.horizon, b.cfg.design)});
    }
  } catch (const std::exception& e) {
    std::printf("FAIL setup: %s\n", e.what());
    return 1;
  }

  report(1, "ROA nesting (system1, N = 10)", [&] { return roa_nesting(*s1); });
  report(2, "N = 15 with TMPC cap", [&] { return fallback_n15(dir); });
  report(3, "problem-size parity", [&] { return size_parity(*s1); });
  report(4, "timing ratio fpd/oct", [&] { return timing_ratio(*s1); });
  report(5, "closed-loop cost parity tmpc/oct", [&] { return cost_parity(*s1); });
  report(6, "recursive feasibility and constraint satisfaction", [&] { return recursive_feasibility(*s1); });
  report(7, "shift candidate feasibility", [&] { return shift_candidate_property(*s1); });
  report(8, "tightening recursion", [&] { return tightening_recursion(designed); });
  report(9, "dual tightening vs vertex enumeration", [&] { return oracle_equivalence(bundled); });
  report(10, "terminal ingredients", [&] { return terminal_ingredients(designed); });
  report(11, "optimality dominance", [&] { return dominance(designed); });
  report(12, "undisturbed convergence", [&] { return undisturbed_convergence(*s1); });

  std::printf("%d of 12 criteria passed\n", 12 - failures);
  return failures == 0 ? 0 : 1;
}
