#pragma once

#include "resfgb/boosting.hpp"
#include "resfgb/common.hpp"
#include "resfgb/dataio.hpp"
#include "resfgb/diagnostics.hpp"
#include "resfgb/embed.hpp"
#include "resfgb/linopt.hpp"
#include "resfgb/loss.hpp"
#include "resfgb/model_io.hpp"
