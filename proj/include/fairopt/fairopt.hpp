#pragma once

#include "fairopt/constraints.hpp"
#include "fairopt/data_model.hpp"
#include "fairopt/error.hpp"
#include "fairopt/fairness_eval.hpp"
#include "fairopt/harness.hpp"
#include "fairopt/moments.hpp"
#include "fairopt/solvers.hpp"
