#pragma once

#include "ablation.hpp"
#include "activation_store.hpp"
#include "error.hpp"
#include "neuron_id.hpp"
#include "overlap.hpp"
#include "percentile.hpp"
#include "probe.hpp"
#include "report.hpp"
#include "rng.hpp"
#include "selector.hpp"
#include "stats.hpp"
#include "toy_bench.hpp"
