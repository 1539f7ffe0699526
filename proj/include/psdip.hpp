#pragma once

// Numerical core. File formats and the command line live in psdip/run_io.hpp and psdip/cli.hpp
// (target psdip::io).

#include "psdip/adam.hpp"
#include "psdip/autodiff.hpp"
#include "psdip/config.hpp"
#include "psdip/conv_layer.hpp"
#include "psdip/error.hpp"
#include "psdip/linear_ops.hpp"
#include "psdip/metrics.hpp"
#include "psdip/net.hpp"
#include "psdip/npy.hpp"
#include "psdip/parallel.hpp"
#include "psdip/pstv.hpp"
#include "psdip/random.hpp"
#include "psdip/sensor.hpp"
#include "psdip/solver.hpp"
#include "psdip/tensor.hpp"
