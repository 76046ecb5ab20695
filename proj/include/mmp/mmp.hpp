#pragma once

#include "mmp/core.hpp"
#include "mmp/normal.hpp"
#include "mmp/data.hpp"
#include "mmp/soc.hpp"
#include "mmp/random.hpp"
#include "mmp/parallel.hpp"
#include "mmp/chain.hpp"
#include "mmp/probit_gibbs.hpp"
#include "mmp/basis.hpp"
#include "mmp/fpca_gibbs.hpp"
#include "mmp/posterior.hpp"
#include "mmp/comparators.hpp"
#include "mmp/analysis.hpp"
#include "mmp/simulation.hpp"
#include "mmp/report.hpp"
