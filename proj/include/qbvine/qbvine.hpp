#pragma once

#include "qbvine/cauchy.hpp"
#include "qbvine/conditional.hpp"
#include "qbvine/dataset.hpp"
#include "qbvine/errors.hpp"
#include "qbvine/gmm.hpp"
#include "qbvine/initial.hpp"
#include "qbvine/inverse_cdf.hpp"
#include "qbvine/kendall.hpp"
#include "qbvine/model.hpp"
#include "qbvine/normal.hpp"
#include "qbvine/pair_copula.hpp"
#include "qbvine/parallel.hpp"
#include "qbvine/rbp.hpp"
#include "qbvine/rng.hpp"
#include "qbvine/scoring.hpp"
#include "qbvine/vine.hpp"
