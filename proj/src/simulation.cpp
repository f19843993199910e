#include "octmpc/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

namespace octmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(DisturbanceMode m) {
  switch (m) {
    case DisturbanceMode::kUniform:
      return "uniform";
    case DisturbanceMode::kSequence:
      return "sequence";
    case DisturbanceMode::kVertex:
      return "vertex";
  }
  return "unknown";
}

DisturbanceMode disturbance_mode_from_string(const std::string& s) {
  if (s == "uniform") return DisturbanceMode::kUniform;
  if (s == "sequence") return DisturbanceMode::kSequence;
  if (s == "vertex") return DisturbanceMode::kVertex;
  throw std::invalid_argument("unknown disturbance mode '" + s + "'");
}

namespace {

std::mt19937_64 make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

DisturbanceSource DisturbanceSource::uniform(const Polytope& W) {
  DisturbanceSource s;
  s.mode_ = DisturbanceMode::kUniform;
  s.dim_ = W.dim();
  s.W_ = W;
  s.lo_.resize(s.dim_);
  s.hi_.resize(s.dim_);
  for (int i = 0; i < s.dim_; ++i) {
    const VectorXd e = VectorXd::Unit(s.dim_, i);
    s.hi_[i] = support(W, e);
    s.lo_[i] = -support(W, -e);
  }
  return s;
}

DisturbanceSource DisturbanceSource::vertex(const Polytope& W) {
  DisturbanceSource s;
  s.mode_ = DisturbanceMode::kVertex;
  s.dim_ = W.dim();
  s.vertices_ = vertices(W);
  if (s.vertices_.empty()) throw std::invalid_argument("disturbance set has no vertices");
  return s;
}

DisturbanceSource DisturbanceSource::sequence(MatrixXd w) {
  DisturbanceSource s;
  s.mode_ = DisturbanceMode::kSequence;
  s.dim_ = static_cast<int>(w.rows());
  s.sequence_ = std::move(w);
  return s;
}

DisturbanceSource DisturbanceSource::zero(int nw) { return sequence(MatrixXd::Zero(nw, 0)); }

MatrixXd DisturbanceSource::draw(int K, std::uint64_t seed) const {
  MatrixXd w = MatrixXd::Zero(dim_, K);
  auto rng = make_rng(seed);
  switch (mode_) {
    case DisturbanceMode::kUniform: {
      std::vector<std::uniform_real_distribution<double>> dist;
      for (int i = 0; i < dim_; ++i) dist.emplace_back(lo_[i], hi_[i]);
      VectorXd v(dim_);
      for (int k = 0; k < K; ++k) {
        for (int tries = 0;; ++tries) {
          for (int i = 0; i < dim_; ++i) v[i] = dist[static_cast<std::size_t>(i)](rng);
          if (W_.contains(v, 1e-12)) break;
          if (tries > 100000) throw std::runtime_error("rejection sampling of W failed");
        }
        w.col(k) = v;
      }
      break;
    }
    case DisturbanceMode::kVertex: {
      const std::size_t nv = vertices_.size();
      const std::size_t offset = rng() % nv;
      for (int k = 0; k < K; ++k) w.col(k) = vertices_[(offset + static_cast<std::size_t>(k)) % nv];
      break;
    }
    case DisturbanceMode::kSequence: {
      const int n = std::min<int>(K, static_cast<int>(sequence_.cols()));
      w.leftCols(n) = sequence_.leftCols(n);
      break;
    }
  }
  return w;
}

ClosedLoopTrace simulate(const MpcController& controller, const LinearSystem& sys, const CostWeights& weights,
                         const VectorXd& x0, const DisturbanceSource& source, const SimulationOptions& options) {
  if (x0.size() != sys.nx()) throw ModelError("initial state has wrong dimension");
  if (source.dim() != sys.nw()) throw ModelError("disturbance source has wrong dimension");
  const int K = options.steps;
  const MatrixXd w = source.draw(K, options.seed);

  ClosedLoopTrace tr;
  tr.x.resize(sys.nx(), K + 1);
  tr.u.resize(sys.nu(), K);
  tr.w.resize(sys.nw(), K);
  tr.stage_cost.resize(K);
  tr.objective.resize(K);
  tr.solve_seconds.resize(K);
  auto truncate = [&](int k) {
    tr.x.conservativeResize(Eigen::NoChange, k + 1);
    tr.u.conservativeResize(Eigen::NoChange, k);
    tr.w.conservativeResize(Eigen::NoChange, k);
    tr.stage_cost.conservativeResize(k);
    tr.objective.conservativeResize(k);
    tr.solve_seconds.conservativeResize(k);
  };

  VectorXd x = x0;
  tr.x.col(0) = x;
  for (int k = 0; k < K; ++k) {
    if (options.stop_below > 0.0 && x.lpNorm<Eigen::Infinity>() < options.stop_below) {
      truncate(k);
      return tr;
    }
    const ControlDecision d = controller.step(x);
    if (!d.feasible) {
      truncate(k);
      throw SimulationError(controller.name() + " infeasible at step " + std::to_string(k) + " (" +
                                to_string(d.status) + ")",
                            std::move(tr), k);
    }
    tr.status.push_back(d.status);
    tr.reduced_accuracy_steps += d.reduced_accuracy;
    tr.u.col(k) = d.u;
    tr.w.col(k) = w.col(k);
    tr.stage_cost[k] = x.dot(weights.Q * x) + d.u.dot(weights.R * d.u);
    tr.objective[k] = d.objective;
    tr.solve_seconds[k] = d.solve_seconds;
    x = sys.step(x, d.u, w.col(k));
    tr.x.col(k + 1) = x;
  }
  return tr;
}

double dynamics_error(const LinearSystem& sys, const ClosedLoopTrace& tr) {
  double e = 0.0;
  for (int k = 0; k < tr.steps(); ++k) {
    const VectorXd pred = sys.step(tr.x.col(k), tr.u.col(k), tr.w.col(k));
    e = std::max(e, (tr.x.col(k + 1) - pred).lpNorm<Eigen::Infinity>());
  }
  return e;
}

double constraint_violation(const LinearSystem& sys, const ClosedLoopTrace& tr) {
  double v = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < tr.steps(); ++k) v = std::max(v, sys.constraint_violation(tr.x.col(k), tr.u.col(k)));
  return v;
}

double max_objective_increase(const ClosedLoopTrace& tr) {
  double inc = -std::numeric_limits<double>::infinity();
  for (int k = 1; k < tr.objective.size(); ++k) inc = std::max(inc, tr.objective[k] - tr.objective[k - 1]);
  return inc;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t point, std::uint64_t run) {
  // splitmix64 over the three words
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ point) ^ run);
}

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < count && !stop; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          stop = true;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

int GridSpec::size() const {
  int n = 1;
  for (int c : counts) n *= c;
  return n;
}

VectorXd GridSpec::point(int index, int nx) const {
  VectorXd x = VectorXd::Zero(nx);
  for (std::size_t d = dims.size(); d-- > 0;) {
    const int c = counts[d];
    const int i = index % c;
    index /= c;
    const double frac = c > 1 ? static_cast<double>(i) / (c - 1) : 0.5;
    x[dims[d]] = lower[static_cast<int>(d)] + frac * (upper[static_cast<int>(d)] - lower[static_cast<int>(d)]);
  }
  return x;
}

int RoaReport::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < controllers.size(); ++i) {
    if (controllers[i] == name) return static_cast<int>(i);
  }
  return -1;
}

RoaReport estimate_roa(const std::vector<const MpcController*>& controllers, const GridSpec& grid, int jobs) {
  if (controllers.empty()) throw std::invalid_argument("no controllers");
  if (grid.dims.size() != grid.counts.size() || static_cast<int>(grid.dims.size()) != grid.lower.size() ||
      grid.lower.size() != grid.upper.size()) {
    throw std::invalid_argument("inconsistent grid specification");
  }
  RoaReport r;
  r.grid = grid;
  r.nx = controllers.front()->nx();
  const int nc = static_cast<int>(controllers.size());
  const int np = grid.size();
  for (const auto* c : controllers) r.controllers.push_back(c->name());
  r.feasible.assign(nc, std::vector<char>(np, 0));
  r.seconds.assign(nc, std::vector<double>(np, 0.0));

  // nesting chain among the controllers present
  std::vector<int> chain;
  for (const char* name : {"tmpc", "oct", "fpd"}) {
    if (const int i = r.index_of(name); i >= 0) chain.push_back(i);
  }
  std::vector<std::vector<NestingViolation>> found(np);

  parallel_for(np, jobs, [&](int p) {
    const VectorXd x = grid.point(p, r.nx);
    for (int c = 0; c < nc; ++c) {
      const ControlDecision d = controllers[c]->step(x);
      r.feasible[c][p] = d.feasible;
      r.seconds[c][p] = d.solve_seconds;
    }
    for (std::size_t a = 0; a < chain.size(); ++a) {
      for (std::size_t b = a + 1; b < chain.size(); ++b) {
        const int in = chain[a], out = chain[b];
        if (!r.feasible[in][p] || r.feasible[out][p]) continue;
        if (controllers[in]->step(x, 1e-6).feasible) found[p].push_back({p, r.controllers[in], r.controllers[out]});
      }
    }
  });

  for (auto& f : found) r.violations.insert(r.violations.end(), f.begin(), f.end());
  r.counts.assign(nc, 0);
  for (int c = 0; c < nc; ++c) r.counts[c] = static_cast<int>(std::count(r.feasible[c].begin(), r.feasible[c].end(), 1));
  const int fpd = r.index_of("fpd");
  const double denom = fpd >= 0 ? r.counts[fpd] : np;
  for (int c = 0; c < nc; ++c) r.percent.push_back(denom > 0 ? 100.0 * r.counts[c] / denom : 0.0);
  return r;
}

std::vector<CostPoint> compare_costs(const MpcController& a, const MpcController& b, const LinearSystem& sys,
                                     const CostWeights& weights, const std::vector<VectorXd>& starts, int runs,
                                     int steps, std::uint64_t seed, int jobs) {
  const DisturbanceSource source = DisturbanceSource::uniform(sys.W);
  std::vector<CostPoint> out(starts.size());
  parallel_for(static_cast<int>(starts.size()), jobs, [&](int p) {
    CostPoint& cp = out[static_cast<std::size_t>(p)];
    cp.x0 = starts[static_cast<std::size_t>(p)];
    cp.feasible_a = a.step(cp.x0).feasible;
    cp.feasible_b = b.step(cp.x0).feasible;
    if (!cp.feasible_a || !cp.feasible_b) return;
    double sa = 0.0, sb = 0.0;
    for (int r = 0; r < runs; ++r) {
      const SimulationOptions opt{steps, derive_seed(seed, static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(r)),
                                  0.0};
      sa += simulate(a, sys, weights, cp.x0, source, opt).total_cost();
      sb += simulate(b, sys, weights, cp.x0, source, opt).total_cost();
    }
    cp.runs = runs;
    cp.mean_a = sa / runs;
    cp.mean_b = sb / runs;
    cp.ratio = cp.mean_b > 0.0 ? cp.mean_a / cp.mean_b : 1.0;
  });
  return out;
}

TimingStats timing_stats(const std::string& name, const ProblemSize& size, std::vector<double> seconds) {
  TimingStats s;
  s.controller = name;
  s.size = size;
  s.samples = static_cast<int>(seconds.size());
  if (seconds.empty()) return s;
  std::sort(seconds.begin(), seconds.end());
  double sum = 0.0;
  for (double v : seconds) sum += v;
  const std::size_t n = seconds.size();
  s.mean = sum / static_cast<double>(n);
  s.median = n % 2 ? seconds[n / 2] : 0.5 * (seconds[n / 2 - 1] + seconds[n / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95 = seconds[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

std::vector<TimingStats> timing_report(const std::vector<const MpcController*>& controllers,
                                       const std::vector<VectorXd>& points) {
  std::vector<TimingStats> out;
  for (const auto* c : controllers) {
    std::vector<double> secs;
    for (const auto& x : points) {
      const ControlDecision d = c->step(x);
      if (d.feasible) secs.push_back(d.solve_seconds);
    }
    out.push_back(timing_stats(c->name(), c->size(), std::move(secs)));
  }
  return out;
}

}  // namespace octmpc
