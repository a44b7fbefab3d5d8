#include "simobs/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "simobs/error.hpp"

namespace simobs {
namespace {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

Moments population_moments(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

double xlogx_ratio(double p, double m) { return p > 0.0 ? p * std::log(p / m) : 0.0; }

}  // namespace

const char* to_string(Measure m) {
  switch (m) {
    case Measure::kCc: return "cc";
    case Measure::kDtw: return "dtw";
    case Measure::kKld: return "kld";
    case Measure::kJsd: return "jsd";
  }
  return "?";
}

Measure parse_measure(const std::string& name) {
  for (Measure m : kAllMeasures)
    if (name == to_string(m)) return m;
  throw ParameterError("unknown measure '" + name + "' (expected cc, dtw, kld or jsd)");
}

namespace {
constexpr std::pair<SimilarityFlag, const char*> kFlagNames[] = {
    {kCcUndefined, "cc_undefined"},     {kKldUndefined, "kld_undefined"},
    {kRefDegenerate, "ref_degenerate"}, {kCandDegenerate, "cand_degenerate"},
    {kJsdUndefined, "jsd_undefined"},
};
}  // namespace

std::string flags_to_string(std::uint32_t flags) {
  std::string out;
  for (const auto& [bit, name] : kFlagNames) {
    if (!(flags & bit)) continue;
    if (!out.empty()) out.push_back('|');
    out += name;
  }
  return out;
}

std::uint32_t parse_flags(const std::string& text) {
  std::uint32_t flags = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t bar = std::min(text.find('|', pos), text.size());
    const std::string token = text.substr(pos, bar - pos);
    bool known = false;
    for (const auto& [bit, name] : kFlagNames) {
      if (token == name) {
        flags |= bit;
        known = true;
      }
    }
    if (!known && !token.empty()) throw ParameterError("unknown similarity flag '" + token + "'");
    pos = bar + 1;
  }
  return flags;
}

bool SimilarityVector::defined(Measure m) const noexcept {
  switch (m) {
    case Measure::kCc: return !has(kCcUndefined);
    case Measure::kDtw: return true;
    case Measure::kKld: return !has(kKldUndefined);
    case Measure::kJsd: return !has(kJsdUndefined);
  }
  return false;
}

double SimilarityVector::value(Measure m) const noexcept {
  switch (m) {
    case Measure::kCc: return cc;
    case Measure::kDtw: return dtw;
    case Measure::kKld: return kld;
    case Measure::kJsd: return jsd;
  }
  return 0.0;
}

double pearson_cc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ParameterError("pearson_cc needs equal lengths");
  if (a.size() < 2) throw ParameterError("pearson_cc needs at least 2 points");
  const Moments ma = population_moments(a);
  const Moments mb = population_moments(b);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double dx = a[i] - ma.mean;
    const double dy = b[i] - mb.mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw UndefinedMeasureError("pearson_cc undefined for zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double dtw_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ParameterError("dtw_distance needs non-empty series");
  const std::size_t m = b.size();
  const double inf = std::numeric_limits<double>::infinity();
  // Two rolling rows of the (n+1) x (m+1) cumulative cost table.
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double cost = std::abs(a[i - 1] - b[j - 1]);
      cur[j] = cost + std::min({prev[j - 1], prev[j], cur[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

KldResult gaussian_kld(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw ParameterError("gaussian_kld needs at least 2 points per series");
  const Moments ma = population_moments(a);
  const Moments mb = population_moments(b);
  KldResult r;
  const double sa = std::max(ma.sd, kSigmaFloor);
  const double sb = std::max(mb.sd, kSigmaFloor);
  r.floored = ma.sd < kSigmaFloor || mb.sd < kSigmaFloor;
  const double dm = ma.mean - mb.mean;
  r.value = std::log(sb / sa) + (sa * sa + dm * dm) / (2.0 * sb * sb) - 0.5;
  return r;
}

double jsd(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ParameterError("jsd needs equal lengths");
  if (a.empty()) throw ParameterError("jsd needs non-empty series");
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0.0 || b[i] < 0.0) throw ParameterError("jsd needs non-negative values");
    sa += a[i];
    sb += b[i];
  }
  if (!(sa > 0.0) || !(sb > 0.0)) throw UndefinedMeasureError("jsd undefined for a zero-sum series");
  double kl_p = 0.0, kl_q = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double p = a[i] / sa;
    const double q = b[i] / sb;
    const double mid = 0.5 * (p + q);
    kl_p += xlogx_ratio(p, mid);
    kl_q += xlogx_ratio(q, mid);
  }
  return std::clamp(0.5 * (kl_p + kl_q), 0.0, std::log(2.0));
}

SimilarityVector similarity_vector(const ByteSeries& reference, const ByteSeries& candidate) {
  const auto [ref, cand] = align(reference, candidate);
  const NormalizedSeries nr = min_max_normalize(ref);
  const NormalizedSeries nc = min_max_normalize(cand);

  SimilarityVector sv;
  if (nr.degenerate) sv.flags |= kRefDegenerate;
  if (nc.degenerate) sv.flags |= kCandDegenerate;

  try {
    sv.cc = pearson_cc(nr.values, nc.values);
  } catch (const Error&) {
    sv.cc = 0.0;
    sv.flags |= kCcUndefined;
  }

  sv.dtw = dtw_distance(nr.values, nc.values);

  try {
    const KldResult k = gaussian_kld(nr.values, nc.values);
    sv.kld = k.value;
    if (k.floored) sv.flags |= kKldUndefined;
  } catch (const Error&) {
    sv.kld = 0.0;
    sv.flags |= kKldUndefined;
  }

  // A degenerate side falls back to its raw bytes so idle-then-burst devices
  // still get a distribution.
  std::vector<double> raw_ref, raw_cand;
  std::span<const double> p(nr.values), q(nc.values);
  if (nr.degenerate) {
    raw_ref.assign(ref.values().begin(), ref.values().end());
    p = raw_ref;
  }
  if (nc.degenerate) {
    raw_cand.assign(cand.values().begin(), cand.values().end());
    q = raw_cand;
  }
  try {
    sv.jsd = jsd(p, q);
  } catch (const Error&) {
    sv.jsd = std::log(2.0);
    sv.flags |= kJsdUndefined;
  }
  return sv;
}

}  // namespace simobs
