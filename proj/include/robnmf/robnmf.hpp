#pragma once

#include "dataset.hpp"
#include "error.hpp"
#include "factorization.hpp"
#include "harness.hpp"
#include "matrix_io.hpp"
#include "metrics.hpp"
#include "noise.hpp"
#include "seed.hpp"
#include "types.hpp"
#include "synthetic.hpp"
