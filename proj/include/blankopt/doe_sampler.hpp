#pragma once

// Constrained Latin-hypercube design of experiments over the sixteen blank
// parameterisations.

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "blankopt/geometry.hpp"

namespace blankopt {

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// n points in [0,1)^d, one per bin [k/n, (k+1)/n) in every dimension.
std::vector<std::vector<double>> lhs(std::size_t n, std::size_t d, std::uint64_t seed);

struct SamplingPlan {
  std::size_t n_train = 64;
  std::size_t n_test = 16;
  std::uint64_t seed_train = 7;
  std::uint64_t seed_test = 11;
  bool stratify = true;
  std::size_t max_retries = 1000;
};

// Parameterisation index of sample i.
inline unsigned stratum_of(std::size_t i) { return static_cast<unsigned>(i % kParameterisations); }

std::vector<BlankDesign> sample_designs(std::size_t n, std::uint64_t seed, const ReferenceGeometry& ref,
                                        bool stratify = true, std::size_t max_retries = 1000);

std::pair<std::vector<BlankDesign>, std::vector<BlankDesign>> generate_splits(const SamplingPlan& plan,
                                                                              const ReferenceGeometry& ref);

}  // namespace blankopt
