#pragma once

#include "ecodrive/baseline.hpp"
#include "ecodrive/battery.hpp"
#include "ecodrive/config.hpp"
#include "ecodrive/interior_point.hpp"
#include "ecodrive/mpc.hpp"
#include "ecodrive/nlp.hpp"
#include "ecodrive/ocp.hpp"
#include "ecodrive/powertrain.hpp"
#include "ecodrive/traffic.hpp"
#include "ecodrive/vehicle_model.hpp"
