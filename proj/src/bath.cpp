#include "transim/bath.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "transim/util.hpp"

namespace transim {

void OhmicBathSpec::validate() const {
  if (g < 0.0) throw std::invalid_argument("OhmicBathSpec: g must be >= 0");
  if (omega_c <= 0.0)
    throw std::invalid_argument("OhmicBathSpec: omega_c must be positive");
  if (temperature <= 0.0)
    throw std::invalid_argument("OhmicBathSpec: temperature must be positive");
  if (eta <= 0.0) throw std::invalid_argument("OhmicBathSpec: eta must be positive");
}

double ohmic_spectrum_at(const OhmicBathSpec& spec, double f) {
  spec.validate();
  // promote to angular units
  const double w = two_pi * f;
  const double g_ang = two_pi * spec.g;
  const double w_c = two_pi * spec.omega_c;
  const double theta = two_pi * spec.temperature;
  const double eta_ang = two_pi * spec.eta;
  const double amp = eta_ang * g_ang * g_ang;
  if (f == 0.0) return two_pi * amp * theta;
  const double x = w / theta;
  double thermal;  // w / (1 - exp(-w/theta)), stable on both signs
  if (x > 0.0)
    thermal = w / (-std::expm1(-x));
  else
    thermal = -w * std::exp(x) / (-std::expm1(x));
  return two_pi * amp * std::exp(-std::abs(w) / w_c) * thermal;
}

namespace {

struct QuadratureNodes {
  std::vector<double> f;       // GHz
  std::vector<double> weight;  // trapezoid weights times spectrum value, 1/ns^2
};

int panel_nodes_for(double span, double df_target) {
  int n = 4097;
  while ((n - 1) * df_target < span && n < 131073) n = 2 * (n - 1) + 1;
  return n;
}

// Three-panel trapezoid grid over [-W, W] with a refined central panel around
// the cutoff spike; weights carry the spectrum values. Node spacing obeys two
// constraints: at or below df_target everywhere, so the discretized
// transform's alias period 1/df comfortably exceeds the largest requested
// lag; and, on the central panel, fine enough to resolve the sharpest
// spectral feature (cutoff spike or thermal knee), which the alias rule alone
// can miss. `scale` multiplies both constraints so a refinement pass tightens
// the grid even where the feature rule binds.
QuadratureNodes spectrum_nodes(const OhmicBathSpec& spec, double df_target,
                               double scale = 1.0) {
  const double w_max = 10.0 * std::max(spec.omega_c, spec.temperature);
  const double split = std::min(10.0 * spec.omega_c, 0.5 * w_max);
  const double feature = std::min(spec.omega_c, spec.temperature);
  const double edges[4] = {-w_max, -split, split, w_max};
  QuadratureNodes nodes;
  for (int p = 0; p < 3; ++p) {
    const double a = edges[p], b = edges[p + 1];
    const double df_panel =
        (p == 1) ? std::min(df_target, feature / 600.0) : df_target;
    const int n_panel = panel_nodes_for(b - a, df_panel * scale);
    const double h = (b - a) / (n_panel - 1);
    for (int i = 0; i < n_panel; ++i) {
      const double f = a + i * h;
      const double tw = (i == 0 || i == n_panel - 1) ? 0.5 * h : h;
      nodes.f.push_back(f);
      nodes.weight.push_back(tw * ohmic_spectrum_at(spec, f));
    }
  }
  return nodes;
}

// C on a uniform tau grid via a per-frequency phase recurrence.
std::vector<std::complex<double>> transform_uniform(
    const QuadratureNodes& nodes, double tau0, double dtau, int n_tau) {
  std::vector<std::complex<double>> c(n_tau, {0.0, 0.0});
  for (size_t j = 0; j < nodes.f.size(); ++j) {
    const double wj = nodes.weight[j];
    if (wj == 0.0) continue;
    std::complex<double> z =
        wj * std::exp(std::complex<double>(0.0, -two_pi * nodes.f[j] * tau0));
    const std::complex<double> step =
        std::exp(std::complex<double>(0.0, -two_pi * nodes.f[j] * dtau));
    for (int i = 0; i < n_tau; ++i) {
      c[i] += z;
      z *= step;
    }
  }
  return c;
}

std::complex<double> transform_single(const QuadratureNodes& nodes, double tau) {
  std::complex<double> acc = 0.0;
  for (size_t j = 0; j < nodes.f.size(); ++j)
    acc += nodes.weight[j] *
           std::exp(std::complex<double>(0.0, -two_pi * nodes.f[j] * tau));
  return acc;
}

// spacing that keeps alias images and trapezoid error negligible out to
// the largest requested lag
double df_target_for(double tau_span) {
  return 1.0 / (2.5 * (tau_span + 150.0));
}

void check_quadrature_convergence(const OhmicBathSpec& spec, double df_target) {
  const QuadratureNodes coarse = spectrum_nodes(spec, df_target);
  const QuadratureNodes fine = spectrum_nodes(spec, df_target, 0.5);
  const std::complex<double> c0c = transform_single(coarse, 0.0);
  const std::complex<double> c0f = transform_single(fine, 0.0);
  const double rel = std::abs(c0c - c0f) / std::abs(c0f);
  if (!(rel < 1e-6)) {
    std::ostringstream msg;
    msg << "correlation quadrature not converged: C(0) moves by " << rel
        << " on refinement (omega_c=" << spec.omega_c
        << ", temperature=" << spec.temperature << ")";
    throw std::runtime_error(msg.str());
  }
}

}  // namespace

std::vector<std::complex<double>> correlation_samples(
    const OhmicBathSpec& spec, const std::vector<double>& taus) {
  spec.validate();
  double tau_span = 0.0;
  for (double t : taus) tau_span = std::max(tau_span, std::abs(t));
  const double df_target = df_target_for(tau_span);
  check_quadrature_convergence(spec, df_target);
  const QuadratureNodes nodes = spectrum_nodes(spec, df_target);
  // uniform grids take the fast recurrence path
  bool uniform = taus.size() >= 2;
  const double dtau = uniform ? taus[1] - taus[0] : 0.0;
  for (size_t i = 1; i + 1 < taus.size() && uniform; ++i)
    if (std::abs((taus[i + 1] - taus[i]) - dtau) > 1e-12 * std::max(1.0, std::abs(dtau)))
      uniform = false;
  if (uniform)
    return transform_uniform(nodes, taus[0], dtau, static_cast<int>(taus.size()));
  std::vector<std::complex<double>> c(taus.size());
  for (size_t i = 0; i < taus.size(); ++i) c[i] = transform_single(nodes, taus[i]);
  return c;
}

CorrelationGrid correlation_function_grid(const OhmicBathSpec& spec,
                                          double tau_max, int n_points) {
  if (tau_max <= 0.0)
    throw std::invalid_argument("correlation_function_grid: tau_max must be positive");
  if (n_points < 3)
    throw std::invalid_argument("correlation_function_grid: need at least 3 points");
  if (n_points % 2 == 0) ++n_points;  // keep tau = 0 on the grid
  CorrelationGrid grid;
  grid.tau = linspace(-tau_max, tau_max, n_points);
  grid.c = correlation_samples(spec, grid.tau);
  const double c0 = std::abs(grid.c[n_points / 2]);
  const double threshold = 1e-6 * c0;
  // smallest grid time beyond which the envelope stays below threshold
  int head = n_points;  // first index (from the right half) of the quiet tail
  for (int i = n_points - 1; i >= n_points / 2; --i) {
    if (std::abs(grid.c[i]) >= threshold) break;
    head = i;
  }
  grid.memory_time = (head < n_points) ? grid.tau[head] : tau_max;
  return grid;
}

std::complex<double> ExpSumFit::eval_time(double tau) const {
  std::complex<double> acc = 0.0;
  for (const auto& m : modes) {
    const std::complex<double> q = std::log(m.z) / ds;
    acc += m.w * std::exp(q * tau);
  }
  return acc;
}

ExpSumFit ExpSumFit::scaled(double factor) const {
  ExpSumFit out = *this;
  for (auto& m : out.modes) m.w *= factor;
  return out;
}

namespace {

// One shift-invariance fit at fixed window length and model order.
ExpSumFit esprit_attempt(const std::vector<std::complex<double>>& h, double ds,
                         int rows, int order) {
  const int n = static_cast<int>(h.size());
  const int cols = n - rows + 1;
  Eigen::MatrixXcd hankel(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) hankel(i, j) = h[i + j];
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(hankel, Eigen::ComputeThinU);
  const int p = std::min<int>(order, static_cast<int>(svd.singularValues().size()));
  const Eigen::MatrixXcd u = svd.matrixU().leftCols(p);
  const Eigen::MatrixXcd a = u.topRows(rows - 1);
  const Eigen::MatrixXcd b = u.bottomRows(rows - 1);
  const Eigen::MatrixXcd phi =
      a.colPivHouseholderQr().solve(b);  // p x p shift operator
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(phi);

  ExpSumFit fit;
  fit.ds = ds;
  std::vector<std::complex<double>> zs;
  for (int k = 0; k < p; ++k) {
    std::complex<double> z = es.eigenvalues()[k];
    if (std::abs(z) > 1.0) z /= std::abs(z);  // no growing modes
    if (std::abs(z) < 1e-14) continue;        // discard numerically dead modes
    zs.push_back(z);
  }
  if (zs.empty()) {
    fit.residual = 1.0;
    return fit;
  }
  // least-squares weights on the full record
  Eigen::MatrixXcd vand(n, static_cast<int>(zs.size()));
  for (size_t k = 0; k < zs.size(); ++k) {
    std::complex<double> zp = 1.0;
    for (int i = 0; i < n; ++i) {
      vand(i, static_cast<int>(k)) = zp;
      zp *= zs[k];
    }
  }
  Eigen::VectorXcd rhs(n);
  for (int i = 0; i < n; ++i) rhs[i] = h[i];
  const Eigen::VectorXcd w = vand.colPivHouseholderQr().solve(rhs);

  double h_max = 0.0;
  for (const auto& v : h) h_max = std::max(h_max, std::abs(v));
  const Eigen::VectorXcd recon = vand * w;
  double err = 0.0;
  for (int i = 0; i < n; ++i) err = std::max(err, std::abs(recon[i] - rhs[i]));
  fit.residual = (h_max > 0.0) ? err / h_max : 0.0;
  for (size_t k = 0; k < zs.size(); ++k)
    fit.modes.push_back({zs[k], w[static_cast<int>(k)]});
  return fit;
}

}  // namespace

ExpSumFit fit_exponential_sum(const std::vector<std::complex<double>>& h,
                              double ds, int max_modes, double tol,
                              const std::vector<std::complex<double>>& h_mid) {
  if (h.size() < 16)
    throw std::invalid_argument("fit_exponential_sum: record too short");
  if (ds <= 0.0) throw std::invalid_argument("fit_exponential_sum: ds must be positive");
  const int n = static_cast<int>(h.size());
  double h_max = 0.0;
  for (const auto& v : h) h_max = std::max(h_max, std::abs(v));
  ExpSumFit best;
  best.ds = ds;
  best.residual = std::numeric_limits<double>::infinity();
  for (int rows : {48, 96, 192, 384}) {
    if (rows + 8 > n) break;
    for (int order = 4; order <= max_modes; order += 2) {
      if (order > rows - 4) break;
      ExpSumFit fit = esprit_attempt(h, ds, rows, order);
      if (!h_mid.empty() && h_max > 0.0) {
        double err = 0.0;
        for (size_t k = 0; k < h_mid.size(); ++k)
          err = std::max(err, std::abs(fit.eval_time((k + 0.5) * ds) - h_mid[k]));
        fit.residual = std::max(fit.residual, err / h_max);
      }
      if (fit.residual < best.residual) best = fit;
      if (best.residual < tol) return best;
    }
  }
  return best;
}

ExpSumFit fit_correlation_modes(const OhmicBathSpec& spec, double tau_max,
                                double ds, int max_modes, double tol) {
  const int n = static_cast<int>(std::lround(tau_max / ds)) + 1;
  std::vector<double> taus(n), mids(n - 1);
  for (int i = 0; i < n; ++i) taus[i] = i * ds;
  for (int i = 0; i + 1 < n; ++i) mids[i] = (i + 0.5) * ds;
  const auto samples = correlation_samples(spec, taus);
  const auto mid_samples = correlation_samples(spec, mids);
  return fit_exponential_sum(samples, ds, max_modes, tol, mid_samples);
}

}  // namespace transim
