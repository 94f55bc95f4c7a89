#pragma once

// Umbrella header: constraint and preference inference from heterogeneous
// expert demonstrations in tabular constrained gridworld MDPs.

#include "moci/numerics.hpp"
#include "moci/constraint_set.hpp"
#include "moci/environment.hpp"
#include "moci/maxent.hpp"
#include "moci/inference.hpp"
#include "moci/baselines.hpp"
#include "moci/metrics.hpp"
#include "moci/io.hpp"
#include "moci/presets.hpp"
#include "moci/experiment.hpp"
