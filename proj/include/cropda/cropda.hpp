#pragma once

// Umbrella header for the whole toolkit.

#include "cropda/core.hpp"
#include "cropda/crop_model.hpp"
#include "cropda/enkf.hpp"
#include "cropda/io.hpp"
#include "cropda/lstm.hpp"
#include "cropda/metrics.hpp"
#include "cropda/pipeline.hpp"
