// Umbrella header.
#pragma once

#include "lcrl/control.hpp"
#include "lcrl/decouple.hpp"
#include "lcrl/estimate.hpp"
#include "lcrl/io.hpp"
#include "lcrl/learn.hpp"
#include "lcrl/model.hpp"
#include "lcrl/parallel.hpp"
#include "lcrl/random.hpp"
#include "lcrl/sde.hpp"
#include "lcrl/stats.hpp"
