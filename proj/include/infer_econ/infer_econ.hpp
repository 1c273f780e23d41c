// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "catalog.hpp"
#include "optimizer.hpp"
#include "parallelism.hpp"
#include "perf_model.hpp"
#include "report.hpp"
#include "roofline.hpp"
#include "specdec.hpp"
