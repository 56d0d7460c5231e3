#pragma once

#include "pricequake/errors.hpp"
#include "pricequake/market_network.hpp"
#include "pricequake/ofc.hpp"
#include "pricequake/engine.hpp"
#include "pricequake/detector.hpp"
#include "pricequake/calibration.hpp"
#include "pricequake/statistics.hpp"
#include "pricequake/data_pipeline.hpp"
#include "pricequake/io.hpp"
#include "pricequake/pipeline.hpp"
