#pragma once

#include "csps/commands.hpp"
#include "csps/csv.hpp"
#include "csps/data.hpp"
#include "csps/dataset.hpp"
#include "csps/diagnostics.hpp"
#include "csps/error.hpp"
#include "csps/estimators.hpp"
#include "csps/gaussian_core.hpp"
#include "csps/model.hpp"
#include "csps/normal.hpp"
#include "csps/parallel.hpp"
#include "csps/sampler.hpp"
