#pragma once

#include "deqmcl/filters/mcl.hpp"
#include "deqmcl/filters/model.hpp"
#include "deqmcl/filters/queue_filter.hpp"
#include "deqmcl/filters/weights.hpp"
#include "deqmcl/gridmap.hpp"
#include "deqmcl/metrics.hpp"
#include "deqmcl/oracle.hpp"
#include "deqmcl/random.hpp"
#include "deqmcl/worldsim.hpp"
