#pragma once

#include "driftforge/adapter.hpp"
#include "driftforge/detector.hpp"
#include "driftforge/error.hpp"
#include "driftforge/experiment.hpp"
#include "driftforge/forecaster.hpp"
#include "driftforge/linear_theory.hpp"
#include "driftforge/protocol.hpp"
#include "driftforge/series.hpp"
#include "driftforge/synthetic.hpp"
