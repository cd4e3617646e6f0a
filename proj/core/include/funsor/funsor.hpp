#pragma once

#include "funsor/approx.hpp"
#include "funsor/delta.hpp"
#include "funsor/domains.hpp"
#include "funsor/error.hpp"
#include "funsor/gaussian.hpp"
#include "funsor/interp.hpp"
#include "funsor/markov.hpp"
#include "funsor/models.hpp"
#include "funsor/ops.hpp"
#include "funsor/optimize.hpp"
#include "funsor/tensor.hpp"
#include "funsor/terms.hpp"
