#pragma once

#include "nnqr/alm.hpp"
#include "nnqr/baselines.hpp"
#include "nnqr/constants.hpp"
#include "nnqr/distributions.hpp"
#include "nnqr/errors.hpp"
#include "nnqr/experiment.hpp"
#include "nnqr/metrics.hpp"
#include "nnqr/numcore.hpp"
#include "nnqr/panel.hpp"
#include "nnqr/panel_io.hpp"
#include "nnqr/quantreg.hpp"
#include "nnqr/random.hpp"
#include "nnqr/rank.hpp"
#include "nnqr/simulation.hpp"
