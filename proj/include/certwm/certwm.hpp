#pragma once

// Umbrella header for the certwm toolkit.

#include "certwm/attacks.hpp"
#include "certwm/basewm.hpp"
#include "certwm/certify.hpp"
#include "certwm/core.hpp"
#include "certwm/errors.hpp"
#include "certwm/extdecoder.hpp"
#include "certwm/harness.hpp"
#include "certwm/imageio.hpp"
#include "certwm/rng.hpp"
#include "certwm/smoothing.hpp"
#include "certwm/stats.hpp"
