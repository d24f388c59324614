// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "driftcal/errors.hpp"
#include "driftcal/spectral.hpp"
#include "driftcal/drift_model.hpp"
#include "driftcal/optimizer.hpp"
#include "driftcal/pipeline.hpp"
#include "driftcal/synth.hpp"
#include "driftcal/io.hpp"
