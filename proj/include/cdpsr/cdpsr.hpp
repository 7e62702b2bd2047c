#pragma once

// Umbrella header.

#include "cdpsr/config.hpp"
#include "cdpsr/experiment.hpp"
#include "cdpsr/fft.hpp"
#include "cdpsr/field.hpp"
#include "cdpsr/forward_model.hpp"
#include "cdpsr/io.hpp"
#include "cdpsr/metrics.hpp"
#include "cdpsr/parallel.hpp"
#include "cdpsr/priors.hpp"
#include "cdpsr/propagation.hpp"
#include "cdpsr/rng.hpp"
#include "cdpsr/segmentation.hpp"
#include "cdpsr/solver.hpp"
#include "cdpsr/targets.hpp"
