#pragma once

#include "chmm/benchmark.hpp"
#include "chmm/decoding.hpp"
#include "chmm/error.hpp"
#include "chmm/exact.hpp"
#include "chmm/io.hpp"
#include "chmm/model.hpp"
#include "chmm/mstep.hpp"
#include "chmm/numeric.hpp"
#include "chmm/parallel.hpp"
#include "chmm/pipeline.hpp"
#include "chmm/selection.hpp"
#include "chmm/simulation.hpp"
#include "chmm/table.hpp"
#include "chmm/variational.hpp"
