#pragma once

#include "loglin/binning.hpp"
#include "loglin/counts.hpp"
#include "loglin/errors.hpp"
#include "loglin/inference.hpp"
#include "loglin/io.hpp"
#include "loglin/model.hpp"
#include "loglin/prior.hpp"
#include "loglin/random.hpp"
#include "loglin/search.hpp"
#include "loglin/summaries.hpp"
#include "loglin/synth.hpp"
#include "loglin/types.hpp"
