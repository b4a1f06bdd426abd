#pragma once

#include "treefe/baselines.hpp"
#include "treefe/common.hpp"
#include "treefe/dataset.hpp"
#include "treefe/linfit.hpp"
#include "treefe/model_io.hpp"
#include "treefe/pruning.hpp"
#include "treefe/simlab.hpp"
#include "treefe/stepwise.hpp"
#include "treefe/trees.hpp"
