#pragma once

#include "stocon/errors.hpp"
#include "stocon/matalg.hpp"
#include "stocon/core.hpp"
#include "stocon/rng.hpp"
#include "stocon/parallel.hpp"
#include "stocon/sim.hpp"
#include "stocon/analysis.hpp"
#include "stocon/combine.hpp"
#include "stocon/models.hpp"
#include "stocon/io.hpp"
#include "stocon/experiment.hpp"
