// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Umbrella header.

#pragma once

#include "kinfuse/autodiff.hpp"
#include "kinfuse/binary_io.hpp"
#include "kinfuse/config.hpp"
#include "kinfuse/dataio.hpp"
#include "kinfuse/errors.hpp"
#include "kinfuse/fusion.hpp"
#include "kinfuse/gnn.hpp"
#include "kinfuse/gradcheck.hpp"
#include "kinfuse/gradsuite.hpp"
#include "kinfuse/graphbuild.hpp"
#include "kinfuse/kgstore.hpp"
#include "kinfuse/metrics.hpp"
#include "kinfuse/model.hpp"
#include "kinfuse/objective.hpp"
#include "kinfuse/optim.hpp"
#include "kinfuse/parallel.hpp"
#include "kinfuse/parameters.hpp"
#include "kinfuse/pipeline.hpp"
#include "kinfuse/random.hpp"
#include "kinfuse/relevance.hpp"
#include "kinfuse/stages.hpp"
#include "kinfuse/synthetic.hpp"
#include "kinfuse/tensor.hpp"
#include "kinfuse/trainer.hpp"
