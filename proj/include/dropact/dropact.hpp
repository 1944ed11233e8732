#pragma once

#include "dropact/activations.hpp"
#include "dropact/autograd.hpp"
#include "dropact/bn_monitor.hpp"
#include "dropact/datasets.hpp"
#include "dropact/errors.hpp"
#include "dropact/networks.hpp"
#include "dropact/penalty_oracle.hpp"
#include "dropact/random.hpp"
#include "dropact/tensor.hpp"
#include "dropact/trainer.hpp"
#include "dropact/variance_shift.hpp"
