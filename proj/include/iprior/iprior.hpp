#pragma once

#include "iprior/cache.hpp"
#include "iprior/errors.hpp"
#include "iprior/experiment.hpp"
#include "iprior/image.hpp"
#include "iprior/kernel.hpp"
#include "iprior/operators.hpp"
#include "iprior/pgm.hpp"
#include "iprior/rng.hpp"
#include "iprior/sampling.hpp"
#include "iprior/shepard.hpp"
#include "iprior/sinkhorn.hpp"
#include "iprior/solvers.hpp"
#include "iprior/spectral.hpp"
#include "iprior/storage.hpp"
#include "iprior/version.hpp"
