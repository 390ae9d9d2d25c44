#include "transim/engine.hpp"

#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "transim/pulse.hpp"
#include "transim/util.hpp"

namespace transim {

namespace {

using Cx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
constexpr Cx kI{0.0, 1.0};

// ---------- small algebra helpers ----------

Vec to_vec(const Mat& rho) {
  return Eigen::Map<const Vec>(rho.data(), rho.size());
}

Mat to_mat(const Vec& v, int n) {
  return Eigen::Map<const Mat>(v.data(), n, n);
}

// integral_0^h e^{z s} ds
Cx exp_int0(Cx z, double h) {
  if (std::abs(z) * h < 1e-6) {
    const Cx zh = z * h;
    return h * (1.0 + zh / 2.0 + zh * zh / 6.0);
  }
  return (std::exp(z * h) - 1.0) / z;
}

// integral_0^h s e^{z s} ds
Cx exp_int1(Cx z, double h) {
  if (std::abs(z) * h < 1e-6) {
    const Cx zh = z * h;
    return h * h * (0.5 + zh / 3.0 + zh * zh / 8.0);
  }
  return (h * std::exp(z * h) - exp_int0(z, h)) / z;
}

// ---------- engine context ----------

struct DeltaBlock {
  int delta = 0;  // ladder offset j - k of the retained elements
  Mat op;
};

struct ChannelPlan {
  Mat coupling;
  std::vector<DeltaBlock> blocks;
  ExpSumFit modes;
  std::vector<Cx> q;  // continuous-time exponents log(z)/ds
};

struct EngineContext {
  const TransmonSpectrum* sp = nullptr;
  int n = 0;
  double omega_d = 0.0;               // linear GHz
  std::vector<double> delta_lin;      // omega_k - k*omega_d
  std::vector<double> omega_lab;      // omega_k
  std::vector<ChannelPlan> plans;
  bool fluct_active = false;
  FluctuatorEnsembleSpec fluct_spec;
  bool redraw_rates = true;
  Mat fluct_coupling;
  Eigen::VectorXd fluct_diag;
};

std::vector<DeltaBlock> split_by_ladder(const Mat& a) {
  const int n = static_cast<int>(a.rows());
  std::vector<DeltaBlock> blocks;
  for (int delta = -(n - 1); delta <= n - 1; ++delta) {
    Mat blk = Mat::Zero(n, n);
    double norm = 0.0;
    for (int j = 0; j < n; ++j) {
      const int k = j - delta;
      if (k < 0 || k >= n) continue;
      blk(j, k) = a(j, k);
      norm += std::abs(a(j, k));
    }
    if (norm > 1e-14) blocks.push_back({delta, std::move(blk)});
  }
  return blocks;
}

// Correlation-compression controls derived from the spectrum shape: the
// sampling must resolve the full quadrature support, the span must cover the
// kernel memory, and the residual target reflects whether the quadrature
// window edge leaves an unfittable ripple (see the bath tests).
struct ModeFitControls {
  double span = 0.0;
  double ds = 0.0;
  double tol = 0.0;
};

ModeFitControls derive_fit_controls(const OhmicBathSpec& bath) {
  const double w_max = 10.0 * std::max(bath.omega_c, bath.temperature);
  double gamma_peak = 0.0;
  const int scan = 2048;
  for (int i = 1; i <= scan; ++i)
    gamma_peak = std::max(gamma_peak, ohmic_spectrum_at(bath, w_max * i / scan));
  double f_content = w_max;
  for (int i = scan; i >= 1; --i) {
    const double f = w_max * i / scan;
    if (ohmic_spectrum_at(bath, f) > 1e-10 * gamma_peak) {
      f_content = f;
      break;
    }
  }
  ModeFitControls c;
  c.ds = 0.45 / f_content;
  const double narrowest = std::min(bath.omega_c, bath.temperature);
  c.span = std::min(50.0 / narrowest, 4000.0);
  c.span = std::max(c.span, 64.0 * c.ds);
  const double edge_ratio = ohmic_spectrum_at(bath, w_max) / gamma_peak;
  c.tol = edge_ratio > 1e-6 ? 1e-3 : 1e-5;
  return c;
}

EngineContext build_context(const TransmonSpectrum& sp,
                            const HybridNoiseModel& noise) {
  EngineContext ctx;
  ctx.sp = &sp;
  ctx.n = sp.spec.n_levels;
  ctx.omega_d = sp.qubit_freq;
  ctx.omega_lab = sp.omega;
  ctx.delta_lin.resize(ctx.n);
  for (int k = 0; k < ctx.n; ++k)
    ctx.delta_lin[k] = sp.omega[k] - k * sp.qubit_freq;

  for (const auto& ch : noise.channels) {
    ch.bath.validate();
    if (ch.coupling.rows() != ctx.n || ch.coupling.cols() != ctx.n)
      throw std::invalid_argument("noise channel coupling has wrong dimension");
    if ((ch.coupling - ch.coupling.adjoint()).cwiseAbs().maxCoeff() > 1e-10)
      throw std::invalid_argument("noise channel coupling is not Hermitian");
    if (ch.bath.g == 0.0) continue;
    ChannelPlan plan;
    plan.coupling = ch.coupling;
    plan.blocks = split_by_ladder(ch.coupling);
    plan.modes = ch.modes ? *ch.modes : derive_channel_modes(ch.bath);
    for (const auto& m : plan.modes.modes)
      plan.q.push_back(std::log(m.z) / plan.modes.ds);
    ctx.plans.push_back(std::move(plan));
  }

  ctx.fluct_active = noise.has_fluctuators();
  if (ctx.fluct_active) {
    if (noise.fluct_coupling.rows() != ctx.n ||
        noise.fluct_coupling.cols() != ctx.n)
      throw std::invalid_argument("fluctuator coupling has wrong dimension");
    noise.fluctuators.validate();
    ctx.fluct_spec = noise.fluctuators;
    ctx.redraw_rates = noise.redraw_rates;
    // The telegraph amplitude b is a rate in 1/ns, like the switching rates
    // gamma_k (the narrowing scale sqrt(gamma^2 - 4 b_eff^2) only makes sense
    // with both in the same units).  Every Hamiltonian in this file is in
    // ordinary-frequency units and picks up a factor 2*pi downstream, so fold
    // the inverse factor into the stored axis operator once here: the phase a
    // trajectory accumulates is then b * (a_i - a_j) * t with no 2*pi.
    ctx.fluct_coupling = noise.fluct_coupling / two_pi;
    ctx.fluct_diag = ctx.fluct_coupling.diagonal().real();
  }
  return ctx;
}

// ---------- kernel state: per-(channel, block, mode) propagated integrals ----------
//
// m[c][b][p](t) = integral_0^t e^{r s} U(t, t-s) A_b U(t, t-s)^dag ds with
// r = q_p - i * 2 pi omega_d * delta_b; Lambda_c(t) then follows by weighting
// with the mode amplitudes and the drive-frame block phases.

struct KernelState {
  std::vector<std::vector<std::vector<Mat>>> m;

  void init(const EngineContext& ctx) {
    m.assign(ctx.plans.size(), {});
    for (size_t c = 0; c < ctx.plans.size(); ++c) {
      const auto& plan = ctx.plans[c];
      m[c].assign(plan.blocks.size(),
                  std::vector<Mat>(plan.q.size(), Mat::Zero(ctx.n, ctx.n)));
    }
  }
};

Cx block_exponent(const EngineContext& ctx, const ChannelPlan& plan, size_t b,
                  size_t p) {
  return plan.q[p] - kI * (two_pi * ctx.omega_d * plan.blocks[b].delta);
}

// Advance every kernel integral through [t, t+h] with step propagator u_h.
// The fresh slice interpolates the conjugated coupling linearly between the
// step endpoints; exact in the kernel exponential.
void advance_kernel(KernelState& ks, const EngineContext& ctx, const Mat& u_h,
                    double h) {
  for (size_t c = 0; c < ctx.plans.size(); ++c) {
    const auto& plan = ctx.plans[c];
    for (size_t b = 0; b < plan.blocks.size(); ++b) {
      const Mat& a = plan.blocks[b].op;
      const Mat a_rot = u_h * a * u_h.adjoint();
      for (size_t p = 0; p < plan.q.size(); ++p) {
        const Cx r = block_exponent(ctx, plan, b, p);
        const Cx i1 = exp_int1(r, h);
        const Cx beta = i1 / h;
        const Cx alpha = exp_int0(r, h) - beta;
        Mat& m = ks.m[c][b][p];
        m = std::exp(r * h) * (u_h * m * u_h.adjoint()) + alpha * a +
            beta * a_rot;
      }
    }
  }
}

// Conjugate the kernel state by a diagonal frame-phase update.
void conjugate_kernel(KernelState& ks, const Mat& p_op) {
  for (auto& ch : ks.m)
    for (auto& blk : ch)
      for (auto& m : blk) m = p_op * m * p_op.adjoint();
}

// Lambda of channel c at absolute time t.
Mat eval_lambda(const KernelState& ks, const EngineContext& ctx, size_t c,
                double t) {
  const auto& plan = ctx.plans[c];
  Mat lambda = Mat::Zero(ctx.n, ctx.n);
  for (size_t b = 0; b < plan.blocks.size(); ++b) {
    const Cx phase =
        std::exp(kI * (two_pi * ctx.omega_d * plan.blocks[b].delta * t));
    Mat acc = Mat::Zero(ctx.n, ctx.n);
    for (size_t p = 0; p < plan.q.size(); ++p)
      acc += plan.modes.modes[p].w * ks.m[c][b][p];
    lambda += phase * acc;
  }
  return lambda;
}

// Drive-frame coupling of channel c at absolute time t.
Mat coupling_at(const EngineContext& ctx, size_t c, double t) {
  const auto& plan = ctx.plans[c];
  const Cx d = std::exp(kI * (two_pi * ctx.omega_d * t));
  Mat a = plan.coupling;
  Cx pj = 1.0;
  std::vector<Cx> pw(ctx.n);
  for (int j = 0; j < ctx.n; ++j, pj *= d) pw[j] = pj;
  for (int j = 0; j < ctx.n; ++j)
    for (int k = 0; k < ctx.n; ++k) a(j, k) *= pw[j] * std::conj(pw[k]);
  return a;
}

// Dissipator [lambda rho, a] + [a, rho lambda^dag] summed over channels.
Mat dissipator(const EngineContext& ctx, const KernelState& ks, double t,
               const Mat& rho) {
  Mat d = Mat::Zero(ctx.n, ctx.n);
  for (size_t c = 0; c < ctx.plans.size(); ++c) {
    const Mat lambda = eval_lambda(ks, ctx, c, t);
    const Mat a = coupling_at(ctx, c, t);
    const Mat lr = lambda * rho;
    const Mat rl = rho * lambda.adjoint();
    d += lr * a - a * lr + a * rl - rl * a;
  }
  return d;
}

// Same dissipator as a superoperator on vec(rho), built from precomputed
// lambda and coupling matrices.
Mat dissipator_superop(const std::vector<Mat>& lambdas,
                       const std::vector<Mat>& couplings, int n) {
  const int m = n * n;
  Mat k = Mat::Zero(m, m);
  const Mat id = Mat::Identity(n, n);
  for (size_t c = 0; c < lambdas.size(); ++c) {
    const Mat& lam = lambdas[c];
    const Mat& a = couplings[c];
    k += Eigen::kroneckerProduct(a.transpose(), lam).eval();
    k -= Eigen::kroneckerProduct(id, (a * lam).eval()).eval();
    k += Eigen::kroneckerProduct(lam.conjugate(), a).eval();
    k -= Eigen::kroneckerProduct((a.transpose() * lam.conjugate()).eval(), id)
             .eval();
  }
  return k;
}

// ---------- step propagator ----------

struct StepUnitaries {
  Mat full;
  Mat half;
};

StepUnitaries step_unitaries(const Mat& h_lin, double h) {
  Eigen::SelfAdjointEigenSolver<Mat> es(h_lin);
  const auto& v = es.eigenvectors();
  const auto& lam = es.eigenvalues();
  const int n = static_cast<int>(h_lin.rows());
  Vec ph_full(n), ph_half(n);
  for (int i = 0; i < n; ++i) {
    ph_full(i) = std::exp(-kI * (two_pi * lam(i) * h));
    ph_half(i) = std::exp(-kI * (two_pi * lam(i) * (h / 2.0)));
  }
  StepUnitaries u;
  u.full = v * ph_full.asDiagonal() * v.adjoint();
  u.half = v * ph_half.asDiagonal() * v.adjoint();
  return u;
}

double segment_hamiltonian_time(double t_abs, double seg_start) {
  return t_abs - seg_start;
}

// ---------- instants bookkeeping ----------

struct InstantCursor {
  const std::vector<double>* instants;
  size_t next = 0;

  explicit InstantCursor(const std::vector<double>& v) : instants(&v) {}
  bool due(double t) {
    return next < instants->size() && (*instants)[next] <= t + 1e-9;
  }
  double current() const { return (*instants)[next]; }
  void pop() { ++next; }
};

void check_instants(const std::vector<double>& instants, double total) {
  for (size_t i = 0; i < instants.size(); ++i) {
    if (instants[i] < -1e-9 || instants[i] > total + 1e-9)
      throw std::invalid_argument("store instant outside the schedule span");
    if (i > 0 && instants[i] <= instants[i - 1])
      throw std::invalid_argument("store instants must be strictly ascending");
  }
}

void record_diagnostics(const Mat& rho, double t, double trace_tol,
                        TrajectoryResult& out) {
  const double te = trace_error(rho);
  out.max_trace_error = std::max(out.max_trace_error, te);
  out.max_hermiticity_error =
      std::max(out.max_hermiticity_error, hermiticity_error(rho));
  out.min_eigenvalue = std::min(out.min_eigenvalue, min_eigenvalue(rho));
  if (te > trace_tol) {
    std::ostringstream msg;
    msg << "trace drift " << te << " beyond tolerance at t = " << t << " ns";
    throw std::runtime_error(msg.str());
  }
}

// ---------- generic micro-step route ----------

TrajectoryResult propagate_generic(const Eigen::MatrixXcd& rho0,
                                   const PulseProgram& program,
                                   const EngineContext& ctx,
                                   const FluctuatorRealization* realization,
                                   const PropagationOptions& opts) {
  const int n = ctx.n;
  if (rho0.rows() != n || rho0.cols() != n)
    throw std::invalid_argument("initial state has wrong dimension");
  const double total = program.total();
  check_instants(opts.store_instants, total);
  if (ctx.fluct_active && realization == nullptr)
    throw std::invalid_argument(
        "fluctuators are active but no realization was supplied");

  TrajectoryResult out;
  out.min_eigenvalue = 1.0;
  Mat rho = rho0;
  KernelState ks;
  ks.init(ctx);
  Mat u_cum = Mat::Identity(n, n);
  if (opts.record_propagators) {
    out.history.times.push_back(0.0);
    out.history.u.push_back(u_cum);
  }

  InstantCursor cursor(opts.store_instants);
  auto store_if_due = [&](double t) {
    while (cursor.due(t)) {
      out.instants.push_back(cursor.current());
      out.states.push_back(rho);
      if (opts.record_lambda) {
        std::vector<Mat> lams;
        for (size_t c = 0; c < ctx.plans.size(); ++c)
          lams.push_back(eval_lambda(ks, ctx, c, cursor.current()));
        out.lambda.push_back(std::move(lams));
      }
      record_diagnostics(rho, cursor.current(), opts.trace_tolerance, out);
      cursor.pop();
    }
  };
  store_if_due(0.0);

  double seg_start = 0.0;
  for (const auto& seg : program.segments) {
    if (seg.duration <= 0.0) {
      if (seg.instant_op.size() > 0) {
        if (seg.instant_op.rows() != n || seg.instant_op.cols() != n)
          throw std::invalid_argument("instant operator has wrong dimension");
        rho = seg.instant_op * rho * seg.instant_op.adjoint();
        u_cum = seg.instant_op * u_cum;
        conjugate_kernel(ks, seg.instant_op);
      }
      if (seg.phase_after != 0.0) {
        const Mat p = frame_phase_op(seg.phase_after, n);
        rho = p * rho * p.adjoint();
        u_cum = p * u_cum;
        conjugate_kernel(ks, p);
      }
      continue;
    }
    const long steps = std::max<long>(1, std::lround(seg.duration / opts.dt));
    const double h = seg.duration / static_cast<double>(steps);
    for (long i = 0; i < steps; ++i) {
      const double t0 = seg_start + i * h;
      const double t1 = seg_start + (i + 1) * h;
      const double tm = t0 + h / 2.0;

      Mat h_lin = drive_hamiltonian_at(segment_hamiltonian_time(tm, seg_start),
                                       *ctx.sp, seg.envelope);
      if (ctx.fluct_active) {
        const double chi_bar =
            fluctuator_integral(*realization, t0, t1) / h;
        h_lin += chi_bar * ctx.fluct_coupling;
      }
      const StepUnitaries u = step_unitaries(h_lin, h);

      if (ctx.plans.empty()) {
        rho = u.full * rho * u.full.adjoint();
      } else {
        const Mat d0 = dissipator(ctx, ks, t0, rho);
        advance_kernel(ks, ctx, u.full, h);
        const Mat w1 = u.full * rho * u.full.adjoint();
        const Mat d0_rot = u.full * d0 * u.full.adjoint();
        const Mat pred = w1 + h * d0_rot;
        const Mat d1 = dissipator(ctx, ks, t1, pred);
        rho = w1 + (h / 2.0) * (d0_rot + d1);
      }

      if (opts.record_propagators) {
        u_cum = u.full * u_cum;
        out.history.times.push_back(t1);
        out.history.u.push_back(u_cum);
      }
      // an instant at the segment end belongs to the completed segment,
      // including any trailing frame phase, so defer it past the phase op
      if (i + 1 < steps) store_if_due(t1);
    }
    seg_start += seg.duration;
    if (seg.instant_op.size() > 0) {
      if (seg.instant_op.rows() != n || seg.instant_op.cols() != n)
        throw std::invalid_argument("instant operator has wrong dimension");
      rho = seg.instant_op * rho * seg.instant_op.adjoint();
      u_cum = seg.instant_op * u_cum;
      conjugate_kernel(ks, seg.instant_op);
      if (opts.record_propagators) {
        out.history.u.back() = u_cum;
      }
    }
    if (seg.phase_after != 0.0) {
      const Mat p = frame_phase_op(seg.phase_after, n);
      rho = p * rho * p.adjoint();
      u_cum = p * u_cum;
      conjugate_kernel(ks, p);
      if (opts.record_propagators) {
        out.history.u.back() = u_cum;
      }
    }
    store_if_due(seg_start);
  }
  store_if_due(total + 1e-9);
  if (out.instants.size() != opts.store_instants.size())
    throw std::runtime_error("internal error: missed store instants");
  return out;
}

// ---------- telegraph phase sandwiches (shared by the stream routes) ----------

struct PhaseTable {
  // (a_i - a_j) for every vec index, from the diagonal of the fluctuator axis
  Eigen::VectorXd diff;

  PhaseTable() = default;
  PhaseTable(const Eigen::VectorXd& diag, int n) {
    diff.resize(n * n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) diff(j * n + i) = diag(i) - diag(j);
  }

  void apply(Vec& v, double theta) const {
    if (theta == 0.0) return;
    for (int k = 0; k < v.size(); ++k)
      v(k) *= std::exp(-kI * (theta * diff(k)));
  }
};

// ---------- drive-free stream route ----------
//
// With no drive the frame Hamiltonian is diagonal and every kernel integral
// is analytic. In the picture rotating at the lab eigenfrequencies the
// dissipative generator is a finite sum of exponentials K e^{zeta t}, so each
// macro step integrates it exactly; the commutator correction it drops is of
// second order in the (weak) dissipator and far below every tolerance here.

struct ExpTermTable {
  std::vector<Cx> zeta;
  std::vector<Mat> k;
  std::vector<double> k_norm;
};

// Structured representation: a matrix-valued function sum_i M_i e^{zeta_i t}.
using ExpRep = std::map<std::pair<double, double>, Mat>;

void rep_add(ExpRep& rep, Cx zeta, const Mat& m) {
  auto key = std::make_pair(zeta.real(), zeta.imag());
  auto it = rep.find(key);
  if (it == rep.end())
    rep.emplace(key, m);
  else
    it->second += m;
}

ExpRep rep_product(const ExpRep& a, const ExpRep& b) {
  ExpRep out;
  for (const auto& [za, ma] : a)
    for (const auto& [zb, mb] : b)
      rep_add(out, Cx(za.first + zb.first, za.second + zb.second), ma * mb);
  return out;
}

ExpRep rep_conjugate_transpose(const ExpRep& a) {
  // (sum M e^{zeta t})^dag = sum M^dag e^{conj(zeta) t}
  ExpRep out;
  for (const auto& [z, m] : a)
    rep_add(out, std::conj(Cx(z.first, z.second)), m.adjoint());
  return out;
}

using TermMap = std::map<std::pair<double, double>, Mat>;

// One channel's dissipative generator as exponential-sum terms, accumulated
// into `table`. Every term carries exactly one factor of the channel's mode
// weights, so a channel's contribution is exactly linear in g^2.
void accumulate_channel_terms(TermMap& table, const EngineContext& ctx,
                              size_t c) {
  const int n = ctx.n;
  const Mat id = Mat::Identity(n, n);
  {
    const auto& plan = ctx.plans[c];

    // lab-gap phases w_jk = 2 pi (omega_j - omega_k)
    auto w_of = [&](int j, int k) {
      return two_pi * (ctx.omega_lab[j] - ctx.omega_lab[k]);
    };

    // coupling in the rotating picture: elementwise phases e^{i w_jk t}
    ExpRep a_rep;
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        if (std::abs(plan.coupling(j, k)) < 1e-14) continue;
        Mat e = Mat::Zero(n, n);
        e(j, k) = plan.coupling(j, k);
        rep_add(a_rep, kI * w_of(j, k), e);
      }

    // kernel operator: constant part (same elementwise phases) plus mode
    // transients whose phases cancel elementwise, leaving plain e^{q_p t}
    ExpRep l_rep;
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        if (std::abs(plan.coupling(j, k)) < 1e-14) continue;
        Cx s_inf = 0.0;
        for (size_t p = 0; p < plan.q.size(); ++p) {
          Cx r = plan.q[p] - kI * w_of(j, k);
          if (std::abs(r) < 1e-9) r -= 1e-9;  // keep the integral bounded
          s_inf += plan.modes.modes[p].w / (-r);
        }
        Mat e = Mat::Zero(n, n);
        e(j, k) = plan.coupling(j, k) * s_inf;
        rep_add(l_rep, kI * w_of(j, k), e);
      }
    for (size_t p = 0; p < plan.q.size(); ++p) {
      Mat e = Mat::Zero(n, n);
      bool any = false;
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          if (std::abs(plan.coupling(j, k)) < 1e-14) continue;
          Cx r = plan.q[p] - kI * w_of(j, k);
          if (std::abs(r) < 1e-9) r -= 1e-9;
          e(j, k) = plan.coupling(j, k) * plan.modes.modes[p].w / r;
          any = true;
        }
      if (any) rep_add(l_rep, plan.q[p], e);
    }

    const ExpRep l_dag = rep_conjugate_transpose(l_rep);
    const ExpRep al = rep_product(a_rep, l_rep);
    const ExpRep lda = rep_product(l_dag, a_rep);

    // [L rho, A] + [A, rho L^dag] as Kronecker terms on vec(rho)
    for (const auto& [za, ma] : a_rep)
      for (const auto& [zl, ml] : l_rep) {
        const Cx z = Cx(za.first + zl.first, za.second + zl.second);
        auto key = std::make_pair(z.real(), z.imag());
        Mat term = Eigen::kroneckerProduct(ma.transpose(), ml).eval();
        auto it = table.find(key);
        if (it == table.end())
          table.emplace(key, term);
        else
          it->second += term;
      }
    for (const auto& [z, m] : al) {
      auto key = z;
      Mat term = -Eigen::kroneckerProduct(id, m).eval();
      auto it = table.find(key);
      if (it == table.end())
        table.emplace(key, term);
      else
        it->second += term;
    }
    for (const auto& [zl, ml] : l_dag)
      for (const auto& [za, ma] : a_rep) {
        const Cx z = Cx(zl.first + za.first, zl.second + za.second);
        auto key = std::make_pair(z.real(), z.imag());
        // A rho L^dag: vec -> (L^dag)^T (x) A = conj(L) (x) A; here ml is
        // already a term of L^dag, so the left factor is ml^T
        Mat term = Eigen::kroneckerProduct(ml.transpose(), ma).eval();
        auto it = table.find(key);
        if (it == table.end())
          table.emplace(key, term);
        else
          it->second += term;
      }
    for (const auto& [z, m] : lda) {
      auto key = z;
      Mat term = -Eigen::kroneckerProduct(m.transpose(), id).eval();
      auto it = table.find(key);
      if (it == table.end())
        table.emplace(key, term);
      else
        it->second += term;
    }
  }
}

ExpTermTable compress_terms(const TermMap& table) {
  ExpTermTable out;
  double scale = 0.0;
  for (const auto& [z, m] : table) scale = std::max(scale, m.cwiseAbs().maxCoeff());
  for (const auto& [z, m] : table) {
    const double norm = m.cwiseAbs().maxCoeff();
    if (norm < 1e-16 * scale) continue;
    out.zeta.push_back(Cx(z.first, z.second));
    out.k.push_back(m);
    out.k_norm.push_back(norm);
  }
  return out;
}

ExpTermTable build_free_dissipator_table(const EngineContext& ctx) {
  TermMap table;
  for (size_t c = 0; c < ctx.plans.size(); ++c)
    accumulate_channel_terms(table, ctx, c);
  return compress_terms(table);
}

// Exactly integrated generator over [t, t+h].
Mat stream_step_generator(const ExpTermTable& table, double t, double h,
                          int m_dim) {
  Mat omega = Mat::Zero(m_dim, m_dim);
  for (size_t i = 0; i < table.zeta.size(); ++i) {
    const Cx z = table.zeta[i];
    Cx phi;
    if (std::abs(z) < 1e-12) {
      phi = h;
    } else {
      phi = (std::exp(z * (t + h)) - std::exp(z * t)) / z;
    }
    if (std::abs(phi) * table.k_norm[i] < 1e-18) continue;
    omega += phi * table.k[i];
  }
  return omega;
}

Mat expm_small(const Mat& omega) {
  const int m = static_cast<int>(omega.rows());
  const Mat id = Mat::Identity(m, m);
  const Mat o2 = omega * omega;
  return id + omega + 0.5 * o2 + (1.0 / 6.0) * (o2 * omega) +
         (1.0 / 24.0) * (o2 * o2);
}

struct StreamPlan {
  std::vector<double> step_edges;  // absolute times, step k spans [e_k, e_{k+1}]
  std::vector<Mat> e;              // superoperator of each step
};

// Step edges: subdivide each inter-instant interval (and the tail) evenly.
std::vector<double> stream_step_edges(const std::vector<double>& instants,
                                      double total, double stream_dt) {
  std::vector<double> anchors = instants;
  if (anchors.empty() || anchors.front() > 1e-12) anchors.insert(anchors.begin(), 0.0);
  if (anchors.back() < total - 1e-9) anchors.push_back(total);
  std::vector<double> edges;
  edges.push_back(anchors.front());
  for (size_t i = 0; i + 1 < anchors.size(); ++i) {
    const double span = anchors[i + 1] - anchors[i];
    const int steps = std::max(1, static_cast<int>(std::ceil(span / stream_dt - 1e-9)));
    for (int s = 1; s <= steps; ++s)
      edges.push_back(anchors[i] + span * s / steps);
  }
  return edges;
}

StreamPlan build_free_stream(const EngineContext& ctx,
                             const std::vector<double>& instants, double total,
                             double stream_dt) {
  StreamPlan plan;
  plan.step_edges = stream_step_edges(instants, total, stream_dt);
  const ExpTermTable table = build_free_dissipator_table(ctx);
  const int m_dim = ctx.n * ctx.n;
  plan.e.reserve(plan.step_edges.size() - 1);
  for (size_t k = 0; k + 1 < plan.step_edges.size(); ++k) {
    const double t = plan.step_edges[k];
    const double h = plan.step_edges[k + 1] - t;
    plan.e.push_back(expm_small(stream_step_generator(table, t, h, m_dim)));
  }
  return plan;
}

// Per-channel integrated generators on the shared step grid; a stream plan
// for any per-channel dissipator rescaling follows by exponentiating the
// weighted sum, skipping the expensive term assembly.
struct StreamBuild {
  std::vector<double> step_edges;
  std::vector<std::vector<Mat>> omega;  // [channel][step]
};

StreamBuild build_free_stream_generators(const EngineContext& ctx,
                                         const std::vector<double>& instants,
                                         double total, double stream_dt) {
  StreamBuild b;
  b.step_edges = stream_step_edges(instants, total, stream_dt);
  const int m_dim = ctx.n * ctx.n;
  const size_t n_steps = b.step_edges.size() - 1;
  b.omega.resize(ctx.plans.size());
  for (size_t c = 0; c < ctx.plans.size(); ++c) {
    TermMap map;
    accumulate_channel_terms(map, ctx, c);
    const ExpTermTable table = compress_terms(map);
    b.omega[c].reserve(n_steps);
    for (size_t k = 0; k < n_steps; ++k) {
      const double t = b.step_edges[k];
      const double h = b.step_edges[k + 1] - t;
      b.omega[c].push_back(stream_step_generator(table, t, h, m_dim));
    }
  }
  return b;
}

StreamPlan stream_plan_from_generators(const StreamBuild& b,
                                       const std::vector<double>& factors,
                                       int m_dim) {
  StreamPlan plan;
  plan.step_edges = b.step_edges;
  const size_t n_steps = b.step_edges.size() - 1;
  plan.e.reserve(n_steps);
  for (size_t k = 0; k < n_steps; ++k) {
    Mat omega = Mat::Zero(m_dim, m_dim);
    for (size_t c = 0; c < b.omega.size(); ++c)
      omega += factors[c] * b.omega[c][k];
    plan.e.push_back(expm_small(omega));
  }
  return plan;
}

// ---------- ensemble plumbing ----------

struct EnsembleAccumulator {
  std::vector<double> sum, sum_sq;

  explicit EnsembleAccumulator(size_t n) : sum(n, 0.0), sum_sq(n, 0.0) {}
  void add(const std::vector<double>& f) {
    for (size_t i = 0; i < f.size(); ++i) {
      sum[i] += f[i];
      sum_sq[i] += f[i] * f[i];
    }
  }
  void merge(const EnsembleAccumulator& other) {
    for (size_t i = 0; i < sum.size(); ++i) {
      sum[i] += other.sum[i];
      sum_sq[i] += other.sum_sq[i];
    }
  }
  DecayCurve finish(const std::vector<double>& instants, int n_traj) const {
    DecayCurve curve;
    curve.instants = instants;
    curve.mean.resize(sum.size());
    curve.half_width.resize(sum.size());
    for (size_t i = 0; i < sum.size(); ++i) {
      const double mean = sum[i] / n_traj;
      curve.mean[i] = mean;
      if (n_traj > 1) {
        const double var =
            std::max(0.0, (sum_sq[i] - n_traj * mean * mean) / (n_traj - 1));
        curve.half_width[i] = std::sqrt(var / n_traj);
      } else {
        curve.half_width[i] = 0.0;
      }
    }
    return curve;
  }
};

constexpr int kTrajChunk = 24;

std::vector<FluctuatorRealization> draw_realizations(
    const EngineContext& ctx, int n_traj, double t_max,
    std::uint64_t base_seed) {
  std::vector<FluctuatorRealization> reals;
  reals.reserve(n_traj);
  const std::vector<double>* fixed_rates = nullptr;
  FluctuatorRealization base;
  if (!ctx.redraw_rates) {
    base = sample_fluctuators(ctx.fluct_spec, t_max,
                              derive_seed(base_seed, 0x72617465));
    fixed_rates = &base.rates;
  }
  for (int i = 0; i < n_traj; ++i)
    reals.push_back(sample_fluctuators(ctx.fluct_spec, t_max,
                                       derive_seed(base_seed, i), fixed_rates));
  return reals;
}

// Mean/stderr over trajectories of per-instant fidelity, deterministic for
// any worker count: fixed-size chunks, each reduced in index order, then a
// serial in-order merge.
DecayCurve reduce_trajectories(
    int n_traj, size_t n_instants, const std::vector<double>& instants,
    int workers, const std::function<std::vector<double>(int)>& run_one) {
  const int n_chunks = (n_traj + kTrajChunk - 1) / kTrajChunk;
  std::vector<EnsembleAccumulator> parts(n_chunks,
                                         EnsembleAccumulator(n_instants));
  parallel_for(
      n_chunks,
      [&](int chunk) {
        const int begin = chunk * kTrajChunk;
        const int end = std::min(n_traj, begin + kTrajChunk);
        for (int i = begin; i < end; ++i) parts[chunk].add(run_one(i));
      },
      workers);
  EnsembleAccumulator total(n_instants);
  for (const auto& p : parts) total.merge(p);
  return total.finish(instants, n_traj);
}

// Batched variant: run_one returns the per-instant fidelities of every state
// concatenated state-major; one curve per state comes back.
std::vector<DecayCurve> reduce_trajectories_batch(
    int n_traj, size_t n_states, const std::vector<double>& instants,
    int workers, const std::function<std::vector<double>(int)>& run_one) {
  const size_t n_inst = instants.size();
  const int n_chunks = (n_traj + kTrajChunk - 1) / kTrajChunk;
  std::vector<EnsembleAccumulator> parts(n_chunks,
                                         EnsembleAccumulator(n_states * n_inst));
  parallel_for(
      n_chunks,
      [&](int chunk) {
        const int begin = chunk * kTrajChunk;
        const int end = std::min(n_traj, begin + kTrajChunk);
        for (int i = begin; i < end; ++i) parts[chunk].add(run_one(i));
      },
      workers);
  EnsembleAccumulator total(n_states * n_inst);
  for (const auto& p : parts) total.merge(p);
  std::vector<DecayCurve> out;
  out.reserve(n_states);
  for (size_t s = 0; s < n_states; ++s) {
    DecayCurve curve;
    curve.instants = instants;
    curve.mean.resize(n_inst);
    curve.half_width.resize(n_inst);
    for (size_t i = 0; i < n_inst; ++i) {
      const size_t j = s * n_inst + i;
      const double mean = total.sum[j] / n_traj;
      curve.mean[i] = mean;
      if (n_traj > 1) {
        const double var = std::max(
            0.0, (total.sum_sq[j] - n_traj * mean * mean) / (n_traj - 1));
        curve.half_width[i] = std::sqrt(var / n_traj);
      } else {
        curve.half_width[i] = 0.0;
      }
    }
    out.push_back(std::move(curve));
  }
  return out;
}

// ---------- drive-free ensemble ----------

// Advances every state through the shared step propagators; the telegraph
// phase integrals are state-independent and computed once per trajectory.
std::vector<DecayCurve> free_stream_ensemble(
    const std::vector<InitialState>& states, const StreamPlan& plan,
    const EngineContext& ctx, double total, int n_traj,
    std::uint64_t base_seed, const PropagationOptions& opts, int workers) {
  const std::vector<double>& instants = opts.store_instants;
  const int n = ctx.n;
  const size_t n_states = states.size();
  const size_t n_inst = instants.size();
  if (n_states == 0)
    throw std::invalid_argument("need at least one initial state");
  for (const auto& st : states)
    if (st.rho0.rows() != n || st.rho0.cols() != n)
      throw std::invalid_argument("initial state has wrong dimension");

  std::vector<FluctuatorRealization> reals;
  PhaseTable phases;
  if (ctx.fluct_active) {
    reals = draw_realizations(ctx, n_traj, total, base_seed);
    phases = PhaseTable(ctx.fluct_diag, n);
  }

  auto run_one = [&](int traj) {
    std::vector<Vec> v(n_states);
    for (size_t s = 0; s < n_states; ++s) v[s] = to_vec(states[s].rho0);
    std::vector<double> fid(n_states * n_inst, 0.0);
    InstantCursor cursor(instants);
    size_t idx = 0;
    auto record = [&](double t) {
      while (cursor.due(t)) {
        for (size_t s = 0; s < n_states; ++s) {
          const Mat rho = to_mat(v[s], n);
          const double te = trace_error(rho);
          if (te > opts.trace_tolerance) {
            std::ostringstream msg;
            msg << "trace drift " << te << " beyond tolerance at t = "
                << cursor.current() << " ns";
            throw std::runtime_error(msg.str());
          }
          fid[s * n_inst + idx] = state_fidelity(rho, states[s].psi_ref);
        }
        ++idx;
        cursor.pop();
      }
    };
    record(plan.step_edges.front());
    for (size_t k = 0; k + 1 < plan.step_edges.size(); ++k) {
      const double t0 = plan.step_edges[k];
      const double t1 = plan.step_edges[k + 1];
      if (ctx.fluct_active) {
        const double tm = 0.5 * (t0 + t1);
        const double th1 =
            two_pi * fluctuator_integral(reals[traj], t0, tm);
        const double th2 =
            two_pi * fluctuator_integral(reals[traj], tm, t1);
        for (size_t s = 0; s < n_states; ++s) {
          phases.apply(v[s], th1);
          v[s] = plan.e[k] * v[s];
          phases.apply(v[s], th2);
        }
      } else {
        for (size_t s = 0; s < n_states; ++s) v[s] = plan.e[k] * v[s];
      }
      record(t1);
    }
    return fid;
  };

  const int n_eff = ctx.fluct_active ? n_traj : 1;
  return reduce_trajectories_batch(n_eff, n_states, instants, workers, run_one);
}

DecayCurve run_free_ensemble(const Eigen::MatrixXcd& rho0,
                             const Eigen::Vector2cd& psi,
                             const PulseProgram& program,
                             const EngineContext& ctx, int n_traj,
                             std::uint64_t base_seed,
                             const PropagationOptions& opts, int workers) {
  const double total = program.total();
  const StreamPlan plan =
      build_free_stream(ctx, opts.store_instants, total, opts.stream_dt);
  return free_stream_ensemble({{rho0, psi}}, plan, ctx, total, n_traj,
                              base_seed, opts, workers)[0];
}

// ---------- periodic DD ensemble ----------

struct CycleWindows {
  std::vector<double> edges;  // cycle-local window edges, [0 .. cycle_span]
  std::vector<Mat> e;         // superoperator of each window
};

// End-of-segment operations (instant unitary, then frame phase) as
// zero-width windows; the kernel state is conjugated to follow the frame.
void append_segment_frame_ops(CycleWindows& win, KernelState& ks,
                              const ScheduleSegment& seg, double local_time,
                              int n) {
  auto push = [&](const Mat& u) {
    win.e.push_back(Eigen::kroneckerProduct(u.conjugate(), u).eval());
    win.edges.push_back(local_time);
    conjugate_kernel(ks, u);
  };
  if (seg.instant_op.size() > 0) {
    if (seg.instant_op.rows() != n || seg.instant_op.cols() != n)
      throw std::invalid_argument("instant operator has wrong dimension");
    push(seg.instant_op);
  }
  if (seg.phase_after != 0.0) push(frame_phase_op(seg.phase_after, n));
}

// One cycle's worth of micro-stepping: advances the kernel state through the
// cycle's segments and composes window superoperators at the telegraph
// phase-update spacing.
CycleWindows stream_cycle(const EngineContext& ctx, KernelState& ks,
                          const std::vector<ScheduleSegment>& segments,
                          double cycle_start, const PropagationOptions& opts) {
  const int n = ctx.n;
  const int m_dim = n * n;
  CycleWindows win;
  win.edges.push_back(0.0);
  double seg_local_start = 0.0;

  std::vector<Mat> lambdas(ctx.plans.size());
  std::vector<Mat> couplings(ctx.plans.size());

  for (const auto& seg : segments) {
    if (seg.duration <= 0.0) {
      append_segment_frame_ops(win, ks, seg, seg_local_start, n);
      continue;
    }
    const int n_win = std::max(
        1, static_cast<int>(std::lround(seg.duration / opts.ensemble_dt)));
    const double h_win = seg.duration / n_win;
    const int micro = std::max(1, static_cast<int>(std::lround(h_win / opts.dt)));
    const double h = h_win / micro;
    for (int w = 0; w < n_win; ++w) {
      Mat e_win = Mat::Identity(m_dim, m_dim);
      for (int i = 0; i < micro; ++i) {
        const double t_local = seg_local_start + w * h_win + i * h;
        const double t0 = cycle_start + t_local;
        const double tm = t0 + h / 2.0;
        const Mat h_lin = drive_hamiltonian_at(
            t_local - seg_local_start + h / 2.0, *ctx.sp, seg.envelope);
        const StepUnitaries u = step_unitaries(h_lin, h);

        // kernel at the step midpoint: advance half, snapshot, advance half
        advance_kernel(ks, ctx, u.half, h / 2.0);
        for (size_t c = 0; c < ctx.plans.size(); ++c) {
          lambdas[c] = eval_lambda(ks, ctx, c, tm);
          couplings[c] = coupling_at(ctx, c, tm);
        }
        advance_kernel(ks, ctx, u.half, h / 2.0);

        const Mat k_d = dissipator_superop(lambdas, couplings, n);
        const Mat k_u =
            Eigen::kroneckerProduct(u.full.conjugate(), u.full).eval();
        const Mat step =
            k_u * (Mat::Identity(m_dim, m_dim) + h * k_d +
                   (h * h / 2.0) * (k_d * k_d));
        e_win = step * e_win;
      }
      win.e.push_back(std::move(e_win));
      win.edges.push_back(seg_local_start + (w + 1) * h_win);
    }
    seg_local_start += seg.duration;
    append_segment_frame_ops(win, ks, seg, seg_local_start, n);
  }
  return win;
}

DecayCurve run_dd_ensemble(const Eigen::MatrixXcd& rho0,
                           const Eigen::Vector2cd& psi,
                           const PulseProgram& program,
                           const EngineContext& ctx, int n_traj,
                           std::uint64_t base_seed,
                           const PropagationOptions& opts, int workers) {
  const int n = ctx.n;
  const double total = program.total();
  const double span = program.cycle_span;
  const int n_cycles = static_cast<int>(std::lround(total / span));
  if (std::abs(n_cycles * span - total) > 1e-6)
    throw std::invalid_argument("DD program span is not whole cycles");

  // cycle segment template: the leading segments that fill one span
  std::vector<ScheduleSegment> cycle_segments;
  double acc = 0.0;
  for (const auto& seg : program.segments) {
    if (acc >= span - 1e-9) break;
    cycle_segments.push_back(seg);
    acc += seg.duration;
  }
  if (std::abs(acc - span) > 1e-6)
    throw std::invalid_argument("cycle span does not align with segments");

  const std::vector<double>& instants = opts.store_instants;
  for (double t : instants) {
    const double cycles = t / span;
    if (std::abs(cycles - std::lround(cycles)) > 1e-6)
      throw std::invalid_argument(
          "DD store instants must be whole numbers of cycles");
  }

  std::vector<FluctuatorRealization> reals;
  PhaseTable phases;
  const int n_eff = ctx.fluct_active ? n_traj : 1;
  if (ctx.fluct_active) {
    reals = draw_realizations(ctx, n_eff, total, base_seed);
    phases = PhaseTable(ctx.fluct_diag, n);
  }

  // trajectory states advance cycle-by-cycle in lockstep with the stream
  std::vector<Vec> states(n_eff, to_vec(rho0));
  std::vector<std::vector<double>> fids(n_eff);
  std::vector<InstantCursor> cursors(n_eff, InstantCursor(instants));

  auto record = [&](int traj, double t) {
    auto& cursor = cursors[traj];
    while (cursor.due(t)) {
      const Mat rho = to_mat(states[traj], n);
      const double te = trace_error(rho);
      if (te > opts.trace_tolerance) {
        std::ostringstream msg;
        msg << "trace drift " << te << " beyond tolerance at t = "
            << cursor.current() << " ns";
        throw std::runtime_error(msg.str());
      }
      fids[traj].push_back(state_fidelity(rho, psi));
      cursor.pop();
    }
  };
  for (int i = 0; i < n_eff; ++i) record(i, 0.0);

  KernelState ks;
  ks.init(ctx);
  CycleWindows frozen;
  bool have_frozen = false;

  for (int c = 0; c < n_cycles; ++c) {
    const double cycle_start = c * span;
    const CycleWindows* win = nullptr;
    CycleWindows fresh;
    if (opts.dd_periodic_after > 0 && c >= opts.dd_periodic_after &&
        have_frozen) {
      win = &frozen;
    } else {
      fresh = stream_cycle(ctx, ks, cycle_segments, cycle_start, opts);
      if (opts.dd_periodic_after > 0 && c == opts.dd_periodic_after - 1) {
        frozen = fresh;
        have_frozen = true;
      }
      win = &fresh;
    }

    parallel_for(
        (n_eff + kTrajChunk - 1) / kTrajChunk,
        [&](int chunk) {
          const int begin = chunk * kTrajChunk;
          const int end = std::min(n_eff, begin + kTrajChunk);
          for (int traj = begin; traj < end; ++traj) {
            Vec& v = states[traj];
            for (size_t w = 0; w + 1 < win->edges.size(); ++w) {
              const double t0 = cycle_start + win->edges[w];
              const double t1 = cycle_start + win->edges[w + 1];
              if (ctx.fluct_active) {
                const double tm = 0.5 * (t0 + t1);
                const double th1 =
                    two_pi * fluctuator_integral(reals[traj], t0, tm);
                const double th2 =
                    two_pi * fluctuator_integral(reals[traj], tm, t1);
                phases.apply(v, th1);
                v = win->e[w] * v;
                phases.apply(v, th2);
              } else {
                v = win->e[w] * v;
              }
            }
            record(traj, cycle_start + span);
          }
        },
        workers);
  }

  EnsembleAccumulator accum(instants.size());
  for (int i = 0; i < n_eff; ++i) {
    if (fids[i].size() != instants.size())
      throw std::runtime_error("internal error: missed store instants");
    accum.add(fids[i]);
  }
  return accum.finish(instants, n_eff);
}

}  // namespace

// ---------- public surface ----------

ExpSumFit derive_channel_modes(const OhmicBathSpec& bath) {
  const ModeFitControls c = derive_fit_controls(bath);
  return fit_correlation_modes(bath, c.span, c.ds, 40, c.tol);
}

bool HybridNoiseModel::has_fluctuators() const {
  return fluctuators.count > 0 && fluctuators.b > 0.0 &&
         fluct_coupling.size() > 0;
}

double trace_error(const Eigen::MatrixXcd& rho) {
  return std::abs(rho.trace() - Cx(1.0, 0.0));
}

double hermiticity_error(const Eigen::MatrixXcd& rho) {
  return (rho - rho.adjoint()).cwiseAbs().maxCoeff();
}

double min_eigenvalue(const Eigen::MatrixXcd& rho) {
  const Mat sym = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  return es.eigenvalues().minCoeff();
}

Eigen::MatrixXcd embed_pure(const Eigen::Vector2cd& psi, int n_levels) {
  if (n_levels < 2) throw std::invalid_argument("need at least two levels");
  Vec full = Vec::Zero(n_levels);
  full(0) = psi(0);
  full(1) = psi(1);
  return full * full.adjoint();
}

double state_fidelity(const Eigen::MatrixXcd& rho,
                      const Eigen::Vector2cd& psi) {
  Cx f = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) f += std::conj(psi(a)) * rho(a, b) * psi(b);
  return f.real();
}

Eigen::MatrixXcd lambda_operator_at(double t, const Eigen::MatrixXcd& coupling,
                                    const PropagatorHistory& history,
                                    const CorrelationGrid& corr, double omega_d,
                                    double memory_cutoff) {
  const int n = static_cast<int>(coupling.rows());
  if (history.times.empty() || history.times.size() != history.u.size())
    throw std::invalid_argument("propagator history is empty or inconsistent");

  // locate t in the history
  const auto it = std::lower_bound(history.times.begin(), history.times.end(),
                                   t - 1e-9);
  if (it == history.times.end() || std::abs(*it - t) > 1e-9)
    throw std::invalid_argument("time not covered by the propagator history");
  const size_t idx_t = static_cast<size_t>(it - history.times.begin());

  if (corr.tau.size() < 2) throw std::invalid_argument("correlation grid too short");
  auto corr_at = [&](double tau) {
    if (tau < corr.tau.front() - 1e-9 || tau > corr.tau.back() + 1e-9)
      throw std::invalid_argument("lag outside the correlation grid");
    const auto jt =
        std::upper_bound(corr.tau.begin(), corr.tau.end(), tau);
    size_t j = std::min(corr.tau.size() - 1,
                        static_cast<size_t>(std::max<std::ptrdiff_t>(
                            1, jt - corr.tau.begin())));
    const double t0 = corr.tau[j - 1], t1 = corr.tau[j];
    const double frac = t1 > t0 ? (tau - t0) / (t1 - t0) : 0.0;
    return corr.c[j - 1] * (1.0 - frac) + corr.c[j] * frac;
  };

  const Mat& u_t = history.u[idx_t];
  Mat lambda = Mat::Zero(n, n);
  double prev_tau = 0.0;
  Mat prev_integrand = Mat::Zero(n, n);
  bool have_prev = false;
  for (size_t j = 0; j <= idx_t; ++j) {
    const double tau = history.times[j];
    if (t - tau > memory_cutoff + 1e-9) continue;
    // drive-frame coupling at tau
    const Cx d = std::exp(kI * (two_pi * omega_d * tau));
    Mat a_tau = coupling;
    std::vector<Cx> pw(n);
    Cx pj = 1.0;
    for (int k = 0; k < n; ++k, pj *= d) pw[k] = pj;
    for (int r = 0; r < n; ++r)
      for (int cc = 0; cc < n; ++cc) a_tau(r, cc) *= pw[r] * std::conj(pw[cc]);
    const Mat u_rel = u_t * history.u[j].adjoint();
    const Mat integrand = corr_at(t - tau) * (u_rel * a_tau * u_rel.adjoint());
    if (have_prev)
      lambda += 0.5 * (tau - prev_tau) * (integrand + prev_integrand);
    prev_tau = tau;
    prev_integrand = integrand;
    have_prev = true;
  }
  return lambda;
}

TrajectoryResult propagate_trajectory(const Eigen::MatrixXcd& rho0,
                                      const PulseProgram& program,
                                      const TransmonSpectrum& sp,
                                      const HybridNoiseModel& noise,
                                      const FluctuatorRealization* realization,
                                      const PropagationOptions& opts) {
  const EngineContext ctx = build_context(sp, noise);
  return propagate_generic(rho0, program, ctx, realization, opts);
}

DecayCurve run_ensemble(const Eigen::MatrixXcd& rho0,
                        const Eigen::Vector2cd& psi_ref,
                        const PulseProgram& program, const TransmonSpectrum& sp,
                        const HybridNoiseModel& noise, int n_traj,
                        std::uint64_t base_seed, const PropagationOptions& opts,
                        int workers) {
  if (n_traj < 1) throw std::invalid_argument("need at least one trajectory");
  const EngineContext ctx = build_context(sp, noise);
  check_instants(opts.store_instants, program.total());

  if (!program.has_drive())
    return run_free_ensemble(rho0, psi_ref, program, ctx, noise, n_traj,
                             base_seed, opts, workers);
  if (program.cycle_span > 0.0)
    return run_dd_ensemble(rho0, psi_ref, program, ctx, n_traj, base_seed,
                           opts, workers);

  // general program: the micro-step route per trajectory
  const int n_eff = ctx.fluct_active ? n_traj : 1;
  std::vector<FluctuatorRealization> reals;
  if (ctx.fluct_active)
    reals = draw_realizations(ctx, n_eff, program.total(), base_seed);
  auto run_one = [&](int traj) {
    const FluctuatorRealization* real =
        ctx.fluct_active ? &reals[traj] : nullptr;
    const TrajectoryResult res =
        propagate_generic(rho0, program, ctx, real, opts);
    std::vector<double> fid;
    fid.reserve(res.states.size());
    for (const auto& rho : res.states)
      fid.push_back(state_fidelity(rho, psi_ref));
    return fid;
  };
  return reduce_trajectories(n_eff, opts.store_instants.size(),
                             opts.store_instants, workers, run_one);
}

DecayCurve simulate_decay_curve(const U3Params& u3, ExperimentKind kind,
                                const TransmonSpectrum& sp,
                                const HybridNoiseModel& noise, double total,
                                int n_intervals, int n_traj,
                                std::uint64_t base_seed,
                                const PropagationOptions& opts,
                                const GateTimings& gates, int workers) {
  const double cycle_span =
      kind == ExperimentKind::dd ? total / n_intervals : 0.0;
  const std::vector<double> instants =
      instants_grid(total, n_intervals, cycle_span);
  const PulseProgram program =
      build_schedule(kind, total, cycle_span, sp, gates);
  const auto [psi, prep] = prepare_state(u3);
  (void)prep;
  const Eigen::MatrixXcd rho0 = embed_pure(psi, sp.spec.n_levels);
  PropagationOptions run_opts = opts;
  run_opts.store_instants = instants;
  return run_ensemble(rho0, psi, program, sp, noise, n_traj, base_seed,
                      run_opts, workers);
}

}  // namespace transim
