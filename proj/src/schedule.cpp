#include "transim/schedule.hpp"

#include <cmath>
#include <stdexcept>

#include "transim/util.hpp"

namespace transim {

namespace {

ScheduleSegment idle_segment(double duration) {
  ScheduleSegment seg;
  seg.axis = GateAxis::idle;
  seg.duration = duration;
  seg.envelope.t_g = duration;
  seg.envelope.sigma = duration / 6.0;
  seg.envelope.amplitude = 0.0;
  return seg;
}

// Calibrated pulse segments for one library gate, matching the standard-gate
// construction (two half-pulses of angle/2 by default).
void append_gate(std::vector<ScheduleSegment>& out, GateAxis axis, double angle,
                 const TransmonSpectrum& sp, const GateTimings& gates) {
  const bool halves = gates.composition == GateComposition::two_halves;
  const int n_seg = halves ? 2 : 1;
  const double seg_t = gates.t_g / n_seg;
  const double seg_angle = angle / n_seg;
  for (int i = 0; i < n_seg; ++i) {
    ScheduleSegment seg;
    seg.axis = axis;
    seg.duration = seg_t;
    seg.envelope = make_envelope(seg_angle, seg_t, seg_t / 6.0, sp.couplings[0]);
    seg.envelope.drag_alpha = gates.drag_alpha;
    seg.envelope.phase = (axis == GateAxis::y) ? 0.5 * pi : 0.0;
    out.push_back(std::move(seg));
  }
}

}  // namespace

double PulseProgram::total() const {
  double t = 0.0;
  for (const auto& seg : segments) t += seg.duration;
  return t;
}

bool PulseProgram::has_drive() const {
  for (const auto& seg : segments)
    if (seg.axis != GateAxis::idle) return true;
  return false;
}

bool PulseProgram::has_instant_ops() const {
  for (const auto& seg : segments)
    if (seg.instant_op.size() > 0) return true;
  return false;
}

std::vector<double> instants_grid(double total, int n, double cycle_span) {
  if (total <= 0.0) throw std::invalid_argument("instants_grid: total must be positive");
  if (n < 1) throw std::invalid_argument("instants_grid: need at least one interval");
  const double spacing = total / n;
  if (cycle_span > 0.0) {
    if (cycle_span > spacing * (1.0 + 1e-9))
      throw std::invalid_argument(
          "instants_grid: cycle is longer than the instant spacing");
    const double cycles_total = total / cycle_span;
    if (std::abs(cycles_total - std::lround(cycles_total)) > 1e-6)
      throw std::invalid_argument(
          "instants_grid: total is not a whole number of cycles");
  }
  std::vector<double> out;
  out.reserve(n + 1);
  for (int k = 0; k <= n; ++k) {
    double t = spacing * k;
    if (cycle_span > 0.0) t = std::lround(t / cycle_span) * cycle_span;
    if (!out.empty() && t <= out.back() + 1e-9)
      throw std::invalid_argument(
          "instants_grid: cycle snapping collapsed adjacent instants");
    out.push_back(t);
  }
  return out;
}

std::pair<Eigen::Vector2cd, PulseProgram> prepare_state(
    const U3Params& u3, const TransmonSpectrum* sp, const GateTimings* gates) {
  Eigen::Vector2cd psi;
  psi << std::cos(0.5 * u3.theta),
      std::exp(std::complex<double>(0.0, u3.phi)) * std::sin(0.5 * u3.theta);
  PulseProgram prep;
  if (sp == nullptr || gates == nullptr) return {psi, prep};
  if (std::abs(u3.theta) > 1e-12) {
    append_gate(prep.segments, GateAxis::y, u3.theta, *sp, *gates);
    // phi as a trailing frame update: exp(+i phi N-hat) phases |1> by e^{i phi}
    if (std::abs(u3.phi) > 1e-12) prep.segments.back().phase_after = -u3.phi;
  }
  return {psi, prep};
}

PulseProgram build_schedule(ExperimentKind kind, double duration,
                            double cycle_span, const TransmonSpectrum& sp,
                            const GateTimings& gates) {
  if (duration <= 0.0)
    throw std::invalid_argument("build_schedule: duration must be positive");
  PulseProgram program;
  if (kind == ExperimentKind::free_evolution) {
    program.segments.push_back(idle_segment(duration));
    return program;
  }

  if (cycle_span <= 0.0)
    throw std::invalid_argument("build_schedule: DD needs a positive cycle span");
  const double cycles = duration / cycle_span;
  const long n_cycles = std::lround(cycles);
  if (n_cycles < 1 || std::abs(cycles - n_cycles) > 1e-6)
    throw std::invalid_argument(
        "build_schedule: duration is not a whole number of cycles");
  const double idle = (cycle_span - 4.0 * gates.t_g) / 4.0;
  if (idle < -1e-9)
    throw std::invalid_argument(
        "build_schedule: cycle span shorter than four gates");

  std::vector<ScheduleSegment> cycle;
  const GateAxis order[4] = {GateAxis::x, GateAxis::y, GateAxis::x, GateAxis::y};
  for (GateAxis axis : order) {
    append_gate(cycle, axis, pi, sp, gates);
    if (idle > 1e-9) cycle.push_back(idle_segment(idle));
  }
  program.cycle_span = cycle_span;
  program.segments.reserve(cycle.size() * n_cycles);
  for (long c = 0; c < n_cycles; ++c)
    program.segments.insert(program.segments.end(), cycle.begin(), cycle.end());
  return program;
}

PulseProgram build_instant_dd_schedule(double duration, double cycle_span,
                                       int n_levels) {
  if (duration <= 0.0)
    throw std::invalid_argument(
        "build_instant_dd_schedule: duration must be positive");
  if (cycle_span <= 0.0)
    throw std::invalid_argument(
        "build_instant_dd_schedule: need a positive cycle span");
  if (n_levels < 2)
    throw std::invalid_argument(
        "build_instant_dd_schedule: need at least two levels");
  const double cycles = duration / cycle_span;
  const long n_cycles = std::lround(cycles);
  if (n_cycles < 1 || std::abs(cycles - n_cycles) > 1e-6)
    throw std::invalid_argument(
        "build_instant_dd_schedule: duration is not a whole number of cycles");

  // exp(-i pi/2 sigma_axis) on the qubit subspace, identity above
  using Cx = std::complex<double>;
  Eigen::MatrixXcd ux = Eigen::MatrixXcd::Identity(n_levels, n_levels);
  ux(0, 0) = 0.0;
  ux(1, 1) = 0.0;
  ux(0, 1) = Cx(0.0, -1.0);
  ux(1, 0) = Cx(0.0, -1.0);
  Eigen::MatrixXcd uy = Eigen::MatrixXcd::Identity(n_levels, n_levels);
  uy(0, 0) = 0.0;
  uy(1, 1) = 0.0;
  uy(0, 1) = Cx(-1.0, 0.0);
  uy(1, 0) = Cx(1.0, 0.0);

  auto gate_segment = [](const Eigen::MatrixXcd& u) {
    ScheduleSegment seg;
    seg.axis = GateAxis::idle;
    seg.duration = 0.0;
    seg.envelope.amplitude = 0.0;
    seg.instant_op = u;
    return seg;
  };

  std::vector<ScheduleSegment> cycle;
  const Eigen::MatrixXcd* order[4] = {&ux, &uy, &ux, &uy};
  for (const auto* u : order) {
    cycle.push_back(gate_segment(*u));
    cycle.push_back(idle_segment(cycle_span / 4.0));
  }

  PulseProgram program;
  program.cycle_span = cycle_span;
  program.segments.reserve(cycle.size() * n_cycles);
  for (long c = 0; c < n_cycles; ++c)
    program.segments.insert(program.segments.end(), cycle.begin(), cycle.end());
  return program;
}

}  // namespace transim
