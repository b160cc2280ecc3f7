#pragma once

#include "capel/datastore.hpp"
#include "capel/error.hpp"
#include "capel/evalsuite.hpp"
#include "capel/model.hpp"
#include "capel/numerics.hpp"
#include "capel/objective.hpp"
#include "capel/rng.hpp"
#include "capel/synth.hpp"
#include "capel/tensor.hpp"
#include "capel/trainer.hpp"
