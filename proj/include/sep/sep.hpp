#pragma once

#include "sep/bundles.hpp"
#include "sep/common.hpp"
#include "sep/configuration.hpp"
#include "sep/dynamics.hpp"
#include "sep/experiments.hpp"
#include "sep/group.hpp"
#include "sep/linalg.hpp"
#include "sep/measure.hpp"
#include "sep/quotient_graph.hpp"
#include "sep/rng.hpp"
#include "sep/spectral.hpp"
