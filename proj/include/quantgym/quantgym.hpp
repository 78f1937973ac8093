#pragma once

#include "agents.hpp"
#include "backtest.hpp"
#include "config.hpp"
#include "env.hpp"
#include "error.hpp"
#include "features.hpp"
#include "market_data.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "run.hpp"
#include "sentiment.hpp"
#include "util.hpp"
