#pragma once

#include "sphsketch/errors.hpp"
#include "sphsketch/sphere_points.hpp"
#include "sphsketch/legendre.hpp"
#include "sphsketch/kernels.hpp"
#include "sphsketch/sketched_rls.hpp"
#include "sphsketch/model_io.hpp"
#include "sphsketch/synthetic_data.hpp"
#include "sphsketch/experiment.hpp"
