#pragma once

#include "swarmflow/autodiff.hpp"
#include "swarmflow/checkpoint.hpp"
#include "swarmflow/config.hpp"
#include "swarmflow/diffusion.hpp"
#include "swarmflow/flowmatch.hpp"
#include "swarmflow/geometry.hpp"
#include "swarmflow/io.hpp"
#include "swarmflow/metrics.hpp"
#include "swarmflow/models.hpp"
#include "swarmflow/navigation.hpp"
#include "swarmflow/optim.hpp"
#include "swarmflow/params.hpp"
#include "swarmflow/sampling.hpp"
#include "swarmflow/tensor.hpp"
#include "swarmflow/training.hpp"
#include "swarmflow/trajectory.hpp"
