#pragma once

// Umbrella header for the library (the CLI lives in tubemax/cli.hpp).

#include "tubemax/bonferroni.hpp"
#include "tubemax/critical.hpp"
#include "tubemax/error.hpp"
#include "tubemax/expression.hpp"
#include "tubemax/geometry.hpp"
#include "tubemax/io.hpp"
#include "tubemax/model.hpp"
#include "tubemax/models.hpp"
#include "tubemax/montecarlo.hpp"
#include "tubemax/nelder_mead.hpp"
#include "tubemax/quadrature.hpp"
#include "tubemax/registry.hpp"
#include "tubemax/reproduce.hpp"
#include "tubemax/specfun.hpp"
#include "tubemax/tube.hpp"
