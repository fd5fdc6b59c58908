#pragma once

#include "btmap/common.hpp"
#include "btmap/dpm.hpp"
#include "btmap/eval.hpp"
#include "btmap/io.hpp"
#include "btmap/kernel_prior.hpp"
#include "btmap/map_apply.hpp"
#include "btmap/map_fit.hpp"
#include "btmap/ordering.hpp"
#include "btmap/parallel.hpp"
#include "btmap/scenarios.hpp"
#include "btmap/special.hpp"
#include "btmap/standardize.hpp"
