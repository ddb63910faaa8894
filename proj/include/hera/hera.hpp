// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hera/annotations.hpp"
#include "hera/autodiff.hpp"
#include "hera/baselines.hpp"
#include "hera/checkpoint.hpp"
#include "hera/errors.hpp"
#include "hera/experiment.hpp"
#include "hera/hierarchy.hpp"
#include "hera/metrics.hpp"
#include "hera/model.hpp"
#include "hera/nn.hpp"
#include "hera/optim.hpp"
#include "hera/synth.hpp"
#include "hera/tensor.hpp"
#include "hera/training.hpp"
