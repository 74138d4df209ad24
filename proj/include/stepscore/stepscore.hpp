#pragma once

#include "stepscore/attention.hpp"
#include "stepscore/checkpoint.hpp"
#include "stepscore/datamodel.hpp"
#include "stepscore/featureio.hpp"
#include "stepscore/harness.hpp"
#include "stepscore/kas.hpp"
#include "stepscore/labels.hpp"
#include "stepscore/losses.hpp"
#include "stepscore/metrics.hpp"
#include "stepscore/model.hpp"
#include "stepscore/optim.hpp"
#include "stepscore/plots.hpp"
#include "stepscore/segnet.hpp"
#include "stepscore/synthgen.hpp"
