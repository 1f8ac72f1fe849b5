#include "blankopt/doe_sampler.hpp"

#include <cmath>
#include <numeric>

#include "blankopt/random.hpp"

namespace blankopt {

namespace {

int angle_id(int region, Shape s) {
  static constexpr int arc[] = {1, 8, 15, 24};
  static constexpr int spline[] = {3, 10, 17, 26};
  return s == Shape::Arc ? arc[region - 2] : spline[region - 2];
}

// Maps unit coordinates onto the sequentially evaluated RD ranges. Returns
// false when a range is empty or the outline cannot be built.
bool fill_dependent(BlankDesign& d, const std::vector<double>& u, const ReferenceGeometry& ref) {
  const auto order = range_dependent_order(d.choices);
  for (std::size_t j = 0; j < order.size(); ++j) {
    ParamRange r;
    try {
      r = dependent_range(order[j], d, ref);
    } catch (const GeometryError&) {
      return false;
    }
    if (r.empty()) return false;
    d.params[order[j]] = r.lo + u[j] * (r.hi - r.lo);
  }
  if (!validate_design(d, ref).empty()) return false;
  try {
    build_contour(d, ref);
  } catch (const GeometryError&) {
    return false;
  }
  return true;
}

}  // namespace

std::vector<std::vector<double>> lhs(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n == 0 || d == 0) throw SamplingError("lhs needs n >= 1 and d >= 1");
  Rng rng(seed);
  std::vector<std::vector<double>> pts(n, std::vector<double>(d));
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < d; ++j) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));
    for (std::size_t i = 0; i < n; ++i) {
      const double k = static_cast<double>(perm[i]);
      const double upper = (k + 1.0) / static_cast<double>(n);
      double v = (k + rng.uniform()) / static_cast<double>(n);
      if (v >= upper) v = std::nextafter(upper, 0.0);
      pts[i][j] = v;
    }
  }
  return pts;
}

std::vector<BlankDesign> sample_designs(std::size_t n, std::uint64_t seed, const ReferenceGeometry& ref,
                                        bool stratify, std::size_t max_retries) {
  std::vector<BlankDesign> out(n);
  if (n == 0) return out;
  Rng assign(mix_seed(seed, 1));
  for (std::size_t i = 0; i < n; ++i)
    out[i].choices = RegionChoices::from_bits(stratify ? stratum_of(i) : static_cast<unsigned>(assign.index(16)));

  // Step 1: RI block (P0 and one small-arc angle per region) over the whole set.
  const auto ri = lhs(n, 5, mix_seed(seed, 2));
  for (std::size_t i = 0; i < n; ++i) {
    BlankDesign& d = out[i];
    const ParamRange p0 = static_range(0);
    d.params[0] = p0.lo + ri[i][0] * (p0.hi - p0.lo);
    for (int k = 2; k <= 5; ++k) {
      const int id = angle_id(k, d.choices.region(k));
      const ParamRange r = static_range(id);
      d.params[id] = r.lo + ri[i][static_cast<std::size_t>(k - 1)] * (r.hi - r.lo);
    }
  }

  // Steps 2 and 3: RD block, one LHS per parameterisation stratum, mapped
  // through per-sample ranges. Any infeasible member redraws the stratum.
  for (unsigned s = 0; s < static_cast<unsigned>(kParameterisations); ++s) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
      if (out[i].choices.bits() == s) members.push_back(i);
    if (members.empty()) continue;
    const std::size_t dims = range_dependent_order(RegionChoices::from_bits(s)).size();
    const std::vector<BlankDesign> base = [&] {
      std::vector<BlankDesign> b;
      for (std::size_t i : members) b.push_back(out[i]);
      return b;
    }();
    bool done = false;
    for (std::size_t attempt = 0; attempt <= max_retries && !done; ++attempt) {
      const auto rd = lhs(members.size(), dims, mix_seed(mix_seed(seed, 3 + s), attempt));
      done = true;
      for (std::size_t m = 0; m < members.size(); ++m) {
        BlankDesign d = base[m];
        if (!fill_dependent(d, rd[m], ref)) {
          done = false;
          break;
        }
        out[members[m]] = std::move(d);
      }
    }
    if (!done) throw SamplingError("infeasible stratum " + RegionChoices::from_bits(s).label());
  }
  return out;
}

std::pair<std::vector<BlankDesign>, std::vector<BlankDesign>> generate_splits(const SamplingPlan& plan,
                                                                              const ReferenceGeometry& ref) {
  if (plan.seed_train == plan.seed_test) throw SamplingError("train and test seeds must differ");
  return {sample_designs(plan.n_train, plan.seed_train, ref, plan.stratify, plan.max_retries),
          sample_designs(plan.n_test, plan.seed_test, ref, plan.stratify, plan.max_retries)};
}

}  // namespace blankopt
