#pragma once
// Pulse programs for the two experiment kinds (free evolution and XY4
// dynamical decoupling), state preparation, and the instant grid shared by
// simulation and measured data.

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "transim/pulse.hpp"
#include "transim/transmon.hpp"

namespace transim {

// Standard U3(theta, phi, lambda) parameterization, radians:
// U3|0> = cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>.
struct U3Params {
  double theta = 0.0;
  double phi = 0.0;
  double lambda = 0.0;
};

enum class ExperimentKind { free_evolution, dd };

// One contiguous span of the schedule: a calibrated pulse or an idle window.
// The envelope's support is segment-local time [0, duration]; idle segments
// carry a zero-amplitude envelope. When the segment ends, an optional exact
// unitary `instant_op` (full system dimension; empty means none) is applied,
// then an optional frame-phase update exp(-i phase_after N-hat). A
// zero-duration segment with an instant_op models an idealized instantaneous
// gate.
struct ScheduleSegment {
  GateAxis axis = GateAxis::idle;
  double duration = 0.0;  // ns
  Envelope envelope;
  Eigen::MatrixXcd instant_op;
  double phase_after = 0.0;  // radians
};

struct PulseProgram {
  std::vector<ScheduleSegment> segments;
  // When > 0 the program is an integer number of identical cycles of this
  // span (set by the DD builder); enables the periodic ensemble fast path.
  double cycle_span = 0.0;

  double total() const;
  bool has_drive() const;        // any segment with a non-idle axis
  bool has_instant_ops() const;  // any segment with an instant unitary
};

// Deployed gate parameters for schedule construction.
struct GateTimings {
  double t_g = 70.0;        // full X/Y duration, ns
  double drag_alpha = 0.5;  // derivative-correction weight of deployed gates
  GateComposition composition = GateComposition::two_halves;
};

// n+1 equidistant instants {k * total / n, k = 0..n}. The count argument is
// the number of equal intervals, so (19600, 70) gives the 280 ns spacing that
// tiles into whole XY4 cycles. With cycle_span > 0 every instant is snapped
// to an integer number of cycles; rejects a cycle longer than the spacing or
// a snap that collapses two instants.
std::vector<double> instants_grid(double total, int n, double cycle_span = 0.0);

// Prepared qubit state U3|0> plus the preparation program: empty (ideal,
// instantaneous) by default, or two calibrated half-pulses realizing the
// theta rotation with the phi rotation as a trailing frame update.
std::pair<Eigen::Vector2cd, PulseProgram> prepare_state(
    const U3Params& u3, const TransmonSpectrum* sp = nullptr,
    const GateTimings* gates = nullptr);

// free_evolution -> one idle segment of `duration`; dd -> repeated
// (X, idle, Y, idle, X, idle, Y, idle) cycles of span `cycle_span` filling
// `duration`, pulses calibrated on `sp`. Idles inside the cycle are
// (cycle_span - 4 t_g)/4 each, placed after each pulse; rejects spans that
// do not tile or leave negative idle.
PulseProgram build_schedule(ExperimentKind kind, double duration,
                            double cycle_span, const TransmonSpectrum& sp,
                            const GateTimings& gates);

// DD schedule with idealized instantaneous pulses: cycles of four
// (instant gate, idle cycle_span/4) pairs in the X, Y, X, Y pattern. Each
// gate is the exact qubit-subspace rotation exp(-i pi/2 sigma_axis) embedded
// as identity on higher levels. Same tiling rules as the calibrated builder.
PulseProgram build_instant_dd_schedule(double duration, double cycle_span,
                                       int n_levels);

}  // namespace transim
