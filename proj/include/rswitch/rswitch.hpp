#pragma once

#include "rswitch/error.hpp"
#include "rswitch/linalg.hpp"
#include "rswitch/rng.hpp"
#include "rswitch/parallel.hpp"
#include "rswitch/switching_model.hpp"
#include "rswitch/cocycle.hpp"
#include "rswitch/lyapunov.hpp"
#include "rswitch/stabilization.hpp"
#include "rswitch/pe_analysis.hpp"
#include "rswitch/io.hpp"
#include "rswitch/cli.hpp"
