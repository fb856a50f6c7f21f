#ifndef OHJ_OHJ_HPP_
#define OHJ_OHJ_HPP_

#include "ohj/adjoint.hpp"
#include "ohj/cli.hpp"
#include "ohj/cauchy.hpp"
#include "ohj/config.hpp"
#include "ohj/ergodic.hpp"
#include "ohj/error.hpp"
#include "ohj/experiments.hpp"
#include "ohj/export.hpp"
#include "ohj/grid.hpp"
#include "ohj/problem.hpp"
#include "ohj/report.hpp"
#include "ohj/schemes.hpp"
#include "ohj/stopping_mc.hpp"
#include "ohj/suite.hpp"
#include "ohj/trig_poly.hpp"

#endif  // OHJ_OHJ_HPP_
