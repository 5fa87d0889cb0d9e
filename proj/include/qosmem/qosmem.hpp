#pragma once

#include "agents.hpp"
#include "arbiter.hpp"
#include "common.hpp"
#include "config.hpp"
#include "controller.hpp"
#include "dram.hpp"
#include "harness.hpp"
#include "meta.hpp"
#include "metrics.hpp"
#include "oracle.hpp"
#include "policy.hpp"
#include "rng.hpp"
#include "simulation.hpp"
