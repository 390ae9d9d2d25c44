#include "transim/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "transim/util.hpp"

namespace transim {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

[[noreturn]] void parse_fail(const std::string& path, int line,
                             const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

double parse_number(const std::string& path, int line, const std::string& s,
                    const char* field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    parse_fail(path, line, std::string("expected a number for ") + field +
                               ", got \"" + s + "\"");
  }
}

long parse_count(const std::string& path, int line, const std::string& s,
                 const char* field) {
  const double v = parse_number(path, line, s, field);
  if (v < 0.0 || v != std::floor(v))
    parse_fail(path, line,
               std::string(field) + " must be a nonnegative integer, got \"" +
                   s + "\"");
  return static_cast<long>(v);
}

constexpr double kDegToRad = pi / 180.0;

// Pulls the next content line (skipping blanks and '#' comments); returns
// false at end of file.
bool next_content_line(std::istream& in, std::string& line, int& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (!line.empty() && line[0] != '#') return true;
  }
  return false;
}

}  // namespace

std::vector<ExperimentRecord> load_experiment_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open count file: " + path);

  std::vector<ExperimentRecord> records;
  std::string line;
  int line_no = 0;
  while (next_content_line(in, line, line_no)) {
    // record header label row
    if (split_fields(line) !=
        std::vector<std::string>{"state_theta_deg", "state_phi_deg",
                                 "state_lambda_deg", "kind", "shots",
                                 "n_instants"})
      parse_fail(path, line_no,
                 "expected record header "
                 "\"state_theta_deg,state_phi_deg,state_lambda_deg,kind,"
                 "shots,n_instants\"");

    if (!next_content_line(in, line, line_no))
      parse_fail(path, line_no, "missing record header values");
    const auto head = split_fields(line);
    if (head.size() != 6)
      parse_fail(path, line_no, "record header needs 6 fields, got " +
                                    std::to_string(head.size()));

    ExperimentRecord rec;
    rec.state.theta = kDegToRad * parse_number(path, line_no, head[0],
                                               "state_theta_deg");
    rec.state.phi =
        kDegToRad * parse_number(path, line_no, head[1], "state_phi_deg");
    rec.state.lambda =
        kDegToRad * parse_number(path, line_no, head[2], "state_lambda_deg");
    if (head[3] == "free")
      rec.kind = ExperimentKind::free_evolution;
    else if (head[3] == "dd")
      rec.kind = ExperimentKind::dd;
    else
      parse_fail(path, line_no,
                 "kind must be \"free\" or \"dd\", got \"" + head[3] + "\"");
    rec.shots = static_cast<int>(parse_count(path, line_no, head[4], "shots"));
    if (rec.shots <= 0) parse_fail(path, line_no, "shots must be positive");
    const long n_instants = parse_count(path, line_no, head[5], "n_instants");
    if (n_instants <= 0) parse_fail(path, line_no, "n_instants must be positive");

    if (!next_content_line(in, line, line_no) ||
        split_fields(line) !=
            std::vector<std::string>{"instant_ns", "counts0", "counts1"})
      parse_fail(path, line_no,
                 "expected tally header \"instant_ns,counts0,counts1\"");

    for (long k = 0; k < n_instants; ++k) {
      if (!next_content_line(in, line, line_no))
        parse_fail(path, line_no,
                   "record ends after " + std::to_string(k) + " of " +
                       std::to_string(n_instants) + " tallies");
      const auto row = split_fields(line);
      if (row.size() != 3)
        parse_fail(path, line_no,
                   "tally row needs 3 fields, got " + std::to_string(row.size()));
      const double t = parse_number(path, line_no, row[0], "instant_ns");
      const long c0 = parse_count(path, line_no, row[1], "counts0");
      const long c1 = parse_count(path, line_no, row[2], "counts1");
      if (c0 + c1 != rec.shots)
        parse_fail(path, line_no,
                   "counts at instant " + row[0] + " sum to " +
                       std::to_string(c0 + c1) + ", expected shots = " +
                       std::to_string(rec.shots));
      rec.instants.push_back(t);
      rec.counts0.push_back(c0);
      rec.counts1.push_back(c1);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_experiment_records(const std::string& path,
                             const std::vector<ExperimentRecord>& records,
                             const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write count file: " + path);
  if (!comment.empty()) out << "# " << comment << "\n";
  char buf[160];
  for (const auto& rec : records) {
    out << "state_theta_deg,state_phi_deg,state_lambda_deg,kind,shots,"
           "n_instants\n";
    std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.6g,%s,%d,%zu\n",
                  rec.state.theta / kDegToRad, rec.state.phi / kDegToRad,
                  rec.state.lambda / kDegToRad,
                  rec.kind == ExperimentKind::dd ? "dd" : "free", rec.shots,
                  rec.instants.size());
    out << buf;
    out << "instant_ns,counts0,counts1\n";
    for (std::size_t k = 0; k < rec.instants.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.10g,%ld,%ld\n", rec.instants[k],
                    rec.counts0[k], rec.counts1[k]);
      out << buf;
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

DecayCurve bootstrap_curve(const ExperimentRecord& rec, int n_resamples,
                           std::uint64_t seed) {
  if (n_resamples < 2)
    throw std::invalid_argument("bootstrap needs at least 2 resamples");
  if (rec.shots <= 0) throw std::invalid_argument("record has no shots");

  std::mt19937_64 rng(seed);
  DecayCurve curve;
  curve.instants = rec.instants;
  for (std::size_t k = 0; k < rec.instants.size(); ++k) {
    const double p_hat =
        static_cast<double>(rec.counts0[k]) / static_cast<double>(rec.shots);
    double sum = 0.0, sum_sq = 0.0;
    if (p_hat <= 0.0 || p_hat >= 1.0) {
      // degenerate tally: every resample reproduces it exactly
      sum = n_resamples * p_hat;
      sum_sq = n_resamples * p_hat * p_hat;
    } else {
      std::binomial_distribution<long> draw(rec.shots, p_hat);
      for (int r = 0; r < n_resamples; ++r) {
        const double f =
            static_cast<double>(draw(rng)) / static_cast<double>(rec.shots);
        sum += f;
        sum_sq += f * f;
      }
    }
    const double mean = sum / n_resamples;
    const double var = std::max(0.0, sum_sq / n_resamples - mean * mean);
    curve.mean.push_back(mean);
    curve.half_width.push_back(2.0 * std::sqrt(var));
  }
  return curve;
}

SpamResult spam_normalize(const DecayCurve& curve, SpamMode mode) {
  std::size_t at0 = curve.instants.size();
  for (std::size_t k = 0; k < curve.instants.size(); ++k)
    if (std::abs(curve.instants[k]) < 1e-9) at0 = k;
  if (at0 == curve.instants.size())
    throw std::invalid_argument(
        "SPAM normalization needs an instant at t = 0");

  SpamResult res;
  res.curve = curve;
  const double m0 = curve.mean[at0];
  if (mode == SpamMode::additive) {
    const double shift = 1.0 - m0;
    for (double& m : res.curve.mean) m += shift;
  } else {
    if (m0 <= 0.0)
      throw std::invalid_argument(
          "multiplicative SPAM normalization needs mean(0) > 0");
    const double scale = 1.0 / m0;
    for (double& m : res.curve.mean) m *= scale;
    for (double& h : res.curve.half_width) h *= scale;
  }
  for (std::size_t k = 0; k < res.curve.mean.size(); ++k)
    if (k != at0 && res.curve.mean[k] > 1.0 + 1e-12) res.exceeded_unity = true;
  return res;
}

std::vector<double> relative_error(const DecayCurve& exp_curve,
                                   const DecayCurve& sim_curve) {
  if (exp_curve.instants.size() != sim_curve.instants.size())
    throw std::invalid_argument("relative error needs matching instant grids");
  std::vector<double> out;
  for (std::size_t k = 0; k < exp_curve.instants.size(); ++k) {
    if (std::abs(exp_curve.instants[k] - sim_curve.instants[k]) > 1e-6)
      throw std::invalid_argument(
          "relative error needs matching instant grids");
    if (exp_curve.mean[k] <= 0.0)
      throw std::invalid_argument(
          "experimental mean must be positive at every instant (t = " +
          std::to_string(exp_curve.instants[k]) + " ns)");
    out.push_back((exp_curve.mean[k] - sim_curve.mean[k]) / exp_curve.mean[k]);
  }
  return out;
}

ErrorSummary summarize_errors(const std::vector<double>& errors) {
  if (errors.empty())
    throw std::invalid_argument("cannot summarize an empty error sample");
  std::vector<double> s = errors;
  std::sort(s.begin(), s.end());
  const auto quantile = [&s](double q) {
    const double pos = q * (s.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    const double frac = pos - lo;
    return s[lo] * (1.0 - frac) + s[hi] * frac;
  };
  ErrorSummary sum;
  sum.mean = 0.0;
  for (double e : s) sum.mean += e;
  sum.mean /= s.size();
  sum.median = quantile(0.5);
  sum.q1 = quantile(0.25);
  sum.q3 = quantile(0.75);
  sum.min = s.front();
  sum.max = s.back();
  return sum;
}

void write_curve_csv(const std::string& path, const DecayCurve& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write curve file: " + path);
  out << "instant_ns,mean,half_width\n";
  char buf[120];
  for (std::size_t k = 0; k < curve.instants.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g\n", curve.instants[k],
                  curve.mean[k], curve.half_width[k]);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

DecayCurve read_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open curve file: " + path);
  std::string line;
  int line_no = 0;
  if (!next_content_line(in, line, line_no) ||
      split_fields(line) !=
          std::vector<std::string>{"instant_ns", "mean", "half_width"})
    parse_fail(path, line_no,
               "expected curve header \"instant_ns,mean,half_width\"");
  DecayCurve curve;
  while (next_content_line(in, line, line_no)) {
    const auto row = split_fields(line);
    if (row.size() != 3)
      parse_fail(path, line_no,
                 "curve row needs 3 fields, got " + std::to_string(row.size()));
    curve.instants.push_back(parse_number(path, line_no, row[0], "instant_ns"));
    curve.mean.push_back(parse_number(path, line_no, row[1], "mean"));
    curve.half_width.push_back(
        parse_number(path, line_no, row[2], "half_width"));
  }
  return curve;
}

}  // namespace transim
