#pragma once

#include "msdi/error.hpp"
#include "msdi/core.hpp"
#include "msdi/random.hpp"
#include "msdi/linalg.hpp"
#include "msdi/models.hpp"
#include "msdi/detector.hpp"
#include "msdi/thresholds.hpp"
#include "msdi/montecarlo.hpp"
#include "msdi/config.hpp"
#include "msdi/apps/surveillance.hpp"
