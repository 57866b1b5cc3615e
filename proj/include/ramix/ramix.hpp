#pragma once

// Everything in one include.

#include "ramix/autograd.hpp"
#include "ramix/bench.hpp"
#include "ramix/dataset.hpp"
#include "ramix/errors.hpp"
#include "ramix/metrics.hpp"
#include "ramix/model.hpp"
#include "ramix/network.hpp"
#include "ramix/noise.hpp"
#include "ramix/parallel.hpp"
#include "ramix/pls.hpp"
#include "ramix/rng.hpp"
#include "ramix/spectral.hpp"
#include "ramix/text_io.hpp"
