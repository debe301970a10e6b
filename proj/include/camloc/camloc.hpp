#pragma once

// Umbrella header: the full appliance-localization toolkit.

#include "camloc/csv.hpp"
#include "camloc/dataproc.hpp"
#include "camloc/dataset_cache.hpp"
#include "camloc/ensemble.hpp"
#include "camloc/errors.hpp"
#include "camloc/experiment.hpp"
#include "camloc/layers.hpp"
#include "camloc/localizer.hpp"
#include "camloc/metrics.hpp"
#include "camloc/model_io.hpp"
#include "camloc/optimizer.hpp"
#include "camloc/resnet.hpp"
#include "camloc/rng.hpp"
#include "camloc/series.hpp"
#include "camloc/svg_plot.hpp"
#include "camloc/synth.hpp"
#include "camloc/tensor.hpp"
