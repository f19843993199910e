#pragma once

#include "octmpc/controllers.hpp"
#include "octmpc/lti_model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace octmpc {

enum class DisturbanceMode { kUniform, kSequence, kVertex };
std::string to_string(DisturbanceMode m);
DisturbanceMode disturbance_mode_from_string(const std::string& s);

/**
 * @brief Disturbance generator over W.
 *
 * Uniform draws are rejection-sampled from the bounding box of W (exactly
 * uniform when W is a box). Vertex mode cycles through the vertices of W
 * starting at an offset picked from the seed.
 */
class DisturbanceSource {
 public:
  static DisturbanceSource uniform(const Polytope& W);
  static DisturbanceSource vertex(const Polytope& W);
  /// Column k is w_k; steps past the end use zero.
  static DisturbanceSource sequence(Eigen::MatrixXd w);
  static DisturbanceSource zero(int nw);

  DisturbanceMode mode() const { return mode_; }
  int dim() const { return dim_; }

  /// The first K disturbances for a given seed.
  Eigen::MatrixXd draw(int K, std::uint64_t seed) const;

 private:
  DisturbanceMode mode_ = DisturbanceMode::kSequence;
  int dim_ = 0;
  Polytope W_;
  Eigen::VectorXd lo_, hi_;
  std::vector<Eigen::VectorXd> vertices_;
  Eigen::MatrixXd sequence_;
};

struct ClosedLoopTrace {
  Eigen::MatrixXd x;  // nx x (K+1)
  Eigen::MatrixXd u;  // nu x K
  Eigen::MatrixXd w;  // nw x K
  Eigen::VectorXd stage_cost;
  Eigen::VectorXd objective;  // optimal value at each step
  Eigen::VectorXd solve_seconds;
  std::vector<SolveStatus> status;
  int reduced_accuracy_steps = 0;

  int steps() const { return static_cast<int>(u.cols()); }
  double total_cost() const { return stage_cost.sum(); }
};

/// Raised when a step is infeasible; carries the trace up to that step.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, ClosedLoopTrace trace, int step)
      : std::runtime_error(what), trace_(std::move(trace)), step_(step) {}
  const ClosedLoopTrace& trace() const { return trace_; }
  int step() const { return step_; }

 private:
  ClosedLoopTrace trace_;
  int step_;
};

struct SimulationOptions {
  int steps = 60;
  std::uint64_t seed = 1;
  /// Stop once ||x_k||_inf drops below this value (0 disables).
  double stop_below = 0.0;
};

ClosedLoopTrace simulate(const MpcController& controller, const LinearSystem& sys, const CostWeights& weights,
                         const Eigen::VectorXd& x0, const DisturbanceSource& source, const SimulationOptions& options);

/// Largest |x_{k+1} - (A x_k + B u_k + Bw w_k)|.
double dynamics_error(const LinearSystem& sys, const ClosedLoopTrace& trace);
/// Largest F x_k + G u_k - b over the trace (<= 0 when satisfied).
double constraint_violation(const LinearSystem& sys, const ClosedLoopTrace& trace);
/// Largest increase of the optimal value between consecutive steps.
double max_objective_increase(const ClosedLoopTrace& trace);

/// Seed for run `run` at grid point `point`, independent of scheduling.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t point, std::uint64_t run);

/// Runs fn(i) for i in [0, count) on up to `jobs` threads (0: hardware
/// concurrency). The first exception thrown is rethrown after all workers stop.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn);

struct GridSpec {
  std::vector<int> dims;  // state coordinates swept, others held at zero
  Eigen::VectorXd lower, upper;
  std::vector<int> counts;

  int size() const;
  Eigen::VectorXd point(int index, int nx) const;
};

struct NestingViolation {
  int point = 0;
  std::string inner, outer;  // inner feasible, outer infeasible
};

struct RoaReport {
  GridSpec grid;
  int nx = 0;
  std::vector<std::string> controllers;
  std::vector<std::vector<char>> feasible;      // [controller][point]
  std::vector<std::vector<double>> seconds;     // [controller][point]
  std::vector<int> counts;
  std::vector<double> percent;  // relative to the FPD count when present, else grid size
  std::vector<NestingViolation> violations;

  int index_of(const std::string& name) const;  // -1 when absent
};

/// One feasibility solve per point and controller. Nesting is checked along
/// tmpc -> oct -> fpd for the controllers present; a point violates only if
/// the inner problem is still feasible with a 1e-6 margin.
RoaReport estimate_roa(const std::vector<const MpcController*>& controllers, const GridSpec& grid, int jobs);

struct CostPoint {
  Eigen::VectorXd x0;
  bool feasible_a = false, feasible_b = false;
  double mean_a = 0.0, mean_b = 0.0;
  double ratio = 0.0;  // mean_a / mean_b, 0 unless both feasible
  int runs = 0;
};

/// Averaged closed-loop cost of two controllers from each start, with the
/// same disturbance realisations for both.
std::vector<CostPoint> compare_costs(const MpcController& a, const MpcController& b, const LinearSystem& sys,
                                     const CostWeights& weights, const std::vector<Eigen::VectorXd>& starts, int runs,
                                     int steps, std::uint64_t seed, int jobs);

struct TimingStats {
  std::string controller;
  int samples = 0;
  double mean = 0.0, median = 0.0, p95 = 0.0;  // seconds
  ProblemSize size;
};

TimingStats timing_stats(const std::string& name, const ProblemSize& size, std::vector<double> seconds);

/// Sequential solves of every controller at the given points.
std::vector<TimingStats> timing_report(const std::vector<const MpcController*>& controllers,
                                       const std::vector<Eigen::VectorXd>& points);

}  // namespace octmpc
