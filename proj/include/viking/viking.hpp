/// \file viking.hpp
/// \brief Umbrella include for the whole library.

#pragma once

#include "viking/checkpoint.hpp"
#include "viking/config.hpp"
#include "viking/core.hpp"
#include "viking/data.hpp"
#include "viking/linalg.hpp"
#include "viking/metrics.hpp"
#include "viking/net.hpp"
#include "viking/posterior.hpp"
#include "viking/predictive.hpp"
#include "viking/svd.hpp"
#include "viking/train.hpp"
