// Umbrella header.
#pragma once

#include "cbfdiff/baselines.hpp"
#include "cbfdiff/benchmark.hpp"
#include "cbfdiff/config.hpp"
#include "cbfdiff/diffusion.hpp"
#include "cbfdiff/invariance.hpp"
#include "cbfdiff/io.hpp"
#include "cbfdiff/maze.hpp"
#include "cbfdiff/metrics.hpp"
#include "cbfdiff/qp.hpp"
#include "cbfdiff/specs.hpp"
