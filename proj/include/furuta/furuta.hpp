#pragma once

// Core library: numerics, plant models, control design, Bayesian optimization,
// synthesis and simulation. Configuration and experiment running live in
// config.hpp and experiment.hpp (they additionally need nlohmann_json).

#include "furuta/error.hpp"
#include "furuta/numerics.hpp"
#include "furuta/plant.hpp"
#include "furuta/control.hpp"
#include "furuta/gp.hpp"
#include "furuta/random.hpp"
#include "furuta/bayesopt.hpp"
#include "furuta/synthesis.hpp"
#include "furuta/sim.hpp"
