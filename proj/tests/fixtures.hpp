#pragma once

#include "blankopt/geometry.hpp"

namespace fixtures {

// Found by random search over sampled designs; meets both forming criteria
// under the shipped oracle (thinning ~0.133, thickening ~0.086).
inline blankopt::BlankDesign feasible_design() {
  blankopt::BlankDesign d;
  d.choices = blankopt::RegionChoices::from_bits(13);
  d.params = {{0, 21.971580319714235},  {3, 85.275644985997204},  {4, 24.222483111523651},
              {5, 38.53253908860448},   {6, 88.101717590713491},  {7, 48.863789049381971},
              {8, 72.519664161438754},  {9, 74.575690795962814},  {17, 64.789844657988638},
              {18, 36.837958830039256}, {19, 21.870857489564017}, {20, 13.053059492149776},
              {21, 136.83705452105801}, {22, -57.164721445235017}, {23, 43.795622789868403},
              {26, 78.036363314378022}, {27, 27.696934011845286}, {28, 10.690003033331458},
              {29, 79.843424836125507}, {30, 9.834595375276793},  {31, -53.206637751484152},
              {32, 46.481514184433671}};
  return d;
}

// Reference blank maxima under the shipped oracle on the desk grid.
inline constexpr double kReferenceThinning = 0.169848144;
inline constexpr double kReferenceThickening = 0.129242659;

}  // namespace fixtures
