#pragma once

#include "robinv/conic/expression.hpp"
#include "robinv/conic/program.hpp"
#include "robinv/conic/sdpa.hpp"
#include "robinv/conic/solver.hpp"
