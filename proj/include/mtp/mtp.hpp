#pragma once

#include "mtp/errors.hpp"
#include "mtp/random.hpp"
#include "mtp/parallel.hpp"
#include "mtp/csv.hpp"
#include "mtp/panel_data.hpp"
#include "mtp/shift_policy.hpp"
#include "mtp/learners.hpp"
#include "mtp/density_ratio.hpp"
#include "mtp/inference.hpp"
#include "mtp/estimator.hpp"
#include "mtp/diagnostics.hpp"
#include "mtp/simulator.hpp"
#include "mtp/config.hpp"
#include "mtp/cli.hpp"
