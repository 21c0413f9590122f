#pragma once

// Umbrella header for the dgsum library.

#include "dgsum/errors.hpp"
#include "dgsum/demb.hpp"
#include "dgsum/corpus.hpp"
#include "dgsum/graph.hpp"
#include "dgsum/autodiff.hpp"
#include "dgsum/models.hpp"
#include "dgsum/metrics.hpp"
#include "dgsum/summarization.hpp"
#include "dgsum/dataset.hpp"
#include "dgsum/training.hpp"
#include "dgsum/synthetic.hpp"
#include "dgsum/experiments.hpp"
#include "dgsum/runtime.hpp"
