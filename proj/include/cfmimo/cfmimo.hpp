#pragma once

#include "cfmimo/accounting.hpp"
#include "cfmimo/baselines.hpp"
#include "cfmimo/chest_jcd.hpp"
#include "cfmimo/config.hpp"
#include "cfmimo/ep_detector.hpp"
#include "cfmimo/harness.hpp"
#include "cfmimo/linalg.hpp"
#include "cfmimo/modem.hpp"
#include "cfmimo/quadrature.hpp"
#include "cfmimo/results_io.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/state_evolution.hpp"
#include "cfmimo/sysmodel.hpp"
