#pragma once

#include "dephase/constants.hpp"
#include "dephase/error.hpp"
#include "dephase/fitting.hpp"
#include "dephase/io.hpp"
#include "dephase/lineshape.hpp"
#include "dephase/physics.hpp"
#include "dephase/spectrum.hpp"
#include "dephase/stochastic.hpp"
