// Umbrella header.
#pragma once

#include "isvd/version.hpp"
#include "isvd/linalg.hpp"
#include "isvd/engine.hpp"
#include "isvd/metrics.hpp"
#include "isvd/policies.hpp"
#include "isvd/random.hpp"
#include "isvd/stream_sim.hpp"
#include "isvd/finance.hpp"
