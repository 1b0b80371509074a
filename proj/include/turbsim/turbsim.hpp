#pragma once

#include "turbsim/counter_rng.hpp"
#include "turbsim/dataset.hpp"
#include "turbsim/degrade.hpp"
#include "turbsim/error.hpp"
#include "turbsim/fft.hpp"
#include "turbsim/image.hpp"
#include "turbsim/image_io.hpp"
#include "turbsim/inverse.hpp"
#include "turbsim/keyvalue.hpp"
#include "turbsim/metrics.hpp"
#include "turbsim/optics.hpp"
#include "turbsim/parallel.hpp"
#include "turbsim/psf.hpp"
#include "turbsim/psf_artifact.hpp"
#include "turbsim/random_field.hpp"
