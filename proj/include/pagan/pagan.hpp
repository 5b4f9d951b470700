#pragma once

// Umbrella header for the photoacoustic denoising / reconstruction toolkit.

#include "pagan/adam.hpp"
#include "pagan/beamform.hpp"
#include "pagan/cli.hpp"
#include "pagan/config.hpp"
#include "pagan/dataset.hpp"
#include "pagan/errors.hpp"
#include "pagan/gan.hpp"
#include "pagan/geometry.hpp"
#include "pagan/mat.hpp"
#include "pagan/metrics.hpp"
#include "pagan/model.hpp"
#include "pagan/parf.hpp"
#include "pagan/pgm.hpp"
#include "pagan/rf.hpp"
#include "pagan/rng.hpp"
#include "pagan/simulate.hpp"
#include "pagan/tensor.hpp"
#include "pagan/threading.hpp"
