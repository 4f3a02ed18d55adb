#pragma once

#include "sdebridge/benchmark.hpp"
#include "sdebridge/bridges.hpp"
#include "sdebridge/config.hpp"
#include "sdebridge/errors.hpp"
#include "sdebridge/gaussian.hpp"
#include "sdebridge/lna.hpp"
#include "sdebridge/mcmc.hpp"
#include "sdebridge/model_zoo.hpp"
#include "sdebridge/ode.hpp"
#include "sdebridge/random.hpp"
#include "sdebridge/sde.hpp"
