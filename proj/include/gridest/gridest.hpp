#pragma once

#include "gridest/combiner.hpp"
#include "gridest/estimators.hpp"
#include "gridest/experiment.hpp"
#include "gridest/measurement.hpp"
#include "gridest/metrics.hpp"
#include "gridest/topology.hpp"
#include "gridest/topology_io.hpp"
