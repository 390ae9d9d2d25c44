#pragma once
// Measurement ingestion: count-file parsing, bootstrapped fidelity curves,
// SPAM normalization, and experiment-vs-model relative errors.

#include <cstdint>
#include <string>
#include <vector>

#include "transim/data.hpp"
#include "transim/schedule.hpp"

namespace transim {

// Shot tallies for one (initial state, experiment kind) pair. Outcome 0 is
// the success outcome (the inverse preparation returned the qubit to its
// ground state), so the empirical fidelity at an instant is counts0/shots.
struct ExperimentRecord {
  U3Params state;  // radians (files store degrees)
  ExperimentKind kind = ExperimentKind::free_evolution;
  int shots = 0;
  std::vector<double> instants;  // ns
  std::vector<long> counts0;     // per instant, counts0 + counts1 == shots
  std::vector<long> counts1;
};

// Count-file format, plain text, one or more records per file:
//
//   # comment
//   state_theta_deg,state_phi_deg,state_lambda_deg,kind,shots,n_instants
//   90,0,0,dd,8192,71
//   instant_ns,counts0,counts1
//   0,8192,0
//   ...
//
// `kind` is "free" or "dd". Blank lines and '#' comments are ignored.
// Malformed rows and tallies that do not sum to `shots` are rejected with the
// file line and offending field in the message.
std::vector<ExperimentRecord> load_experiment_records(const std::string& path);
void save_experiment_records(const std::string& path,
                             const std::vector<ExperimentRecord>& records,
                             const std::string& comment = "");

// Per instant, draws `n_resamples` binomial resamples of the empirical
// outcome distribution and reports their mean fidelity with a 2-sigma
// half-width. Deterministic for a fixed seed.
DecayCurve bootstrap_curve(const ExperimentRecord& rec, int n_resamples = 10,
                           std::uint64_t seed = 0);

// State-preparation-and-measurement correction: pins mean(t=0) to one.
enum class SpamMode { additive, multiplicative };

struct SpamResult {
  DecayCurve curve;
  // true when the correction pushed some instant's mean above one; values are
  // reported as-is, never clamped
  bool exceeded_unity = false;
};

// Requires an instant at t = 0. The additive mode (default, matching the
// usual practice of shifting the whole trace) adds 1 - mean(0) everywhere and
// preserves differences between instants exactly; the multiplicative mode
// scales by 1/mean(0), rescaling half-widths along with the means. Both are
// idempotent.
SpamResult spam_normalize(const DecayCurve& curve,
                          SpamMode mode = SpamMode::additive);

// Signed per-instant (exp - sim)/exp on matching grids; rejects a
// non-positive experimental mean.
std::vector<double> relative_error(const DecayCurve& exp_curve,
                                   const DecayCurve& sim_curve);

// Box-plot style summary of a sample of signed errors.
struct ErrorSummary {
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;  // 25th percentile
  double q3 = 0.0;  // 75th percentile
  double min = 0.0;
  double max = 0.0;
};

ErrorSummary summarize_errors(const std::vector<double>& errors);

// CSV with header "instant_ns,mean,half_width".
void write_curve_csv(const std::string& path, const DecayCurve& curve);
DecayCurve read_curve_csv(const std::string& path);

}  // namespace transim
