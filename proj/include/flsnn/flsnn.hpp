#pragma once

#include "flsnn/core.hpp"
#include "flsnn/rng.hpp"
#include "flsnn/data.hpp"
#include "flsnn/snn.hpp"
#include "flsnn/ann.hpp"
#include "flsnn/optim.hpp"
#include "flsnn/model.hpp"
#include "flsnn/compression.hpp"
#include "flsnn/attacks.hpp"
#include "flsnn/fl.hpp"
#include "flsnn/checkpoint.hpp"
#include "flsnn/experiment.hpp"
