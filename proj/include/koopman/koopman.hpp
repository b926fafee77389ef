#pragma once

#include "koopman/errors.hpp"
#include "koopman/swe_solver.hpp"
#include "koopman/snapshot_store.hpp"
#include "koopman/dmd_engine.hpp"
#include "koopman/rom_builder.hpp"
#include "koopman/experiment.hpp"
