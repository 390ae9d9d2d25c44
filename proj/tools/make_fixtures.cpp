// Generates the synthetic count datasets shipped under data/fixtures/.
//
// Each dataset mimics one device (fitted bath and fluctuator values from the
// device tables) measured over six initial states for both experiment kinds.
// Free-evolution records for superposition states come from the full hybrid
// model with a 200-trajectory telegraph ensemble; pole-state free records and
// every decoupling record come from the bath-only model, which is
// deterministic (populations are blind to the telegraph phases, and the
// decoupling cycles refocus them to well below shot noise — the same model
// class the fitting protocol uses for those curves). Counts are binomial
// draws at 8192 shots with generation seeds disjoint from every fitting seed.
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "transim/bath.hpp"
#include "transim/data.hpp"
#include "transim/dataio.hpp"
#include "transim/engine.hpp"
#include "transim/schedule.hpp"
#include "transim/transmon.hpp"
#include "transim/util.hpp"

using namespace transim;

namespace {

struct DeviceEntry {
  const char* name;
  double omega_q, eta_q;                  // GHz
  double g_x, omega_c_x, g_z, omega_c_z;  // GHz-units couplings and cutoffs
  double b, gamma_max;                    // telegraph amplitude and top rate
};

constexpr DeviceEntry kDevices[] = {
    {"quito", 5.0806, 0.3192, 5.734e-3, 1.948, 4.413e-3, 5.690e-3, 5.98e-4,
     5.1e-2},
    {"lima", 5.1277, 0.3183, 4.782e-3, 2.340, 9.393e-3, 5.979e-3, 3.23e-4,
     8.3e-2},
};

struct StateEntry {
  const char* label;
  U3Params u3;
};

const std::vector<StateEntry> kStates = {
    {"zero", {0.0, 0.0, 0.0}},          {"one", {pi, 0.0, 0.0}},
    {"plus", {0.5 * pi, 0.0, 0.0}},     {"minus", {0.5 * pi, pi, 0.0}},
    {"plus_i", {0.5 * pi, 0.5 * pi, 0.0}},
    {"minus_i", {0.5 * pi, -0.5 * pi, 0.0}},
};

bool is_pole(const StateEntry& st) {
  return st.u3.theta == 0.0 || st.u3.theta == pi;
}

ExperimentRecord record_from_curve(const U3Params& state, ExperimentKind kind,
                                   const DecayCurve& curve, int shots,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ExperimentRecord rec;
  rec.state = state;
  rec.kind = kind;
  rec.shots = shots;
  rec.instants = curve.instants;
  for (double p : curve.mean) {
    const double clamped = std::min(1.0, std::max(0.0, p));
    std::binomial_distribution<long> draw(shots, clamped);
    const long c0 = draw(rng);
    rec.counts0.push_back(c0);
    rec.counts1.push_back(shots - c0);
  }
  return rec;
}

void generate_device(const DeviceEntry& dev, double total_ns, int n_intervals,
                     const std::string& out_dir, std::uint64_t master_seed) {
  const TransmonSpectrum sp = spectrum_from_device(dev.omega_q, dev.eta_q, 4);
  const double gap =
      std::abs(sp.coupling_z(1, 1).real() - sp.coupling_z(0, 0).real());

  OhmicBathSpec bath_x;
  bath_x.g = dev.g_x;
  bath_x.omega_c = dev.omega_c_x;
  OhmicBathSpec bath_z;
  bath_z.g = dev.g_z;
  bath_z.omega_c = dev.omega_c_z;

  HybridNoiseModel baths_only;
  baths_only.channels.push_back(NoiseChannel{bath_x, sp.coupling_x, std::nullopt});
  baths_only.channels.push_back(NoiseChannel{bath_z, sp.coupling_z, std::nullopt});

  HybridNoiseModel full = baths_only;
  full.fluctuators.count = 10;
  full.fluctuators.b = dev.b;
  full.fluctuators.gamma_min = 1e-4;
  full.fluctuators.gamma_max = dev.gamma_max;
  full.fluct_coupling = sp.coupling_z / gap;

  GateTimings gates;
  PropagationOptions opts;
  const int shots = 8192;
  const int n_traj = 200;

  std::vector<ExperimentRecord> records;
  std::uint64_t seed = master_seed;
  DecayCurve dd_plus_model;  // saved separately as the model-curve artifact
  for (const auto kind : {ExperimentKind::free_evolution, ExperimentKind::dd}) {
    for (const auto& st : kStates) {
      ++seed;
      const bool ensemble =
          kind == ExperimentKind::free_evolution && !is_pole(st);
      HybridNoiseModel model = ensemble ? full : baths_only;
      if (ensemble) model.fluctuators.seed = seed;
      const DecayCurve curve = simulate_decay_curve(
          st.u3, kind, sp, model, total_ns, n_intervals,
          ensemble ? n_traj : 1, seed, opts, gates);
      records.push_back(
          record_from_curve(st.u3, kind, curve, shots, seed + 500));
      if (kind == ExperimentKind::dd && std::string(st.label) == "plus")
        dd_plus_model = curve;
      std::printf("  %s %s %s: F(end) = %.4f\n", dev.name,
                  kind == ExperimentKind::dd ? "dd" : "free", st.label,
                  curve.mean.back());
      std::fflush(stdout);
    }
  }

  const std::string tag = total_ns >= 19000.0 ? "19p6us" : "9p8us";
  const std::string base = out_dir + "/" + dev.name + "_" + tag;
  save_experiment_records(
      base + ".csv", records,
      std::string("synthetic counts, ") + dev.name +
          " device values, full window " + std::to_string(total_ns) + " ns");
  write_curve_csv(base + "_dd_plus_model.csv", dd_plus_model);
  std::printf("wrote %s.csv (%zu records)\n", base.c_str(), records.size());
}

}  // namespace

int main(int argc, char** argv) {
  const std::string out_dir = argc > 1 ? argv[1] : "data/fixtures";
  // generation seeds live in a range no fitting code draws from
  generate_device(kDevices[0], 19600.0, 70, out_dir, 770000);
  generate_device(kDevices[0], 9800.0, 35, out_dir, 771000);
  generate_device(kDevices[1], 19600.0, 70, out_dir, 772000);
  return 0;
}
