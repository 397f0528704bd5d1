#pragma once

#include "vlafp/audio.hpp"
#include "vlafp/augment.hpp"
#include "vlafp/autodiff.hpp"
#include "vlafp/common.hpp"
#include "vlafp/dsp.hpp"
#include "vlafp/eval.hpp"
#include "vlafp/features.hpp"
#include "vlafp/fft.hpp"
#include "vlafp/index.hpp"
#include "vlafp/matrix.hpp"
#include "vlafp/model.hpp"
#include "vlafp/pelt.hpp"
#include "vlafp/segmentation.hpp"
#include "vlafp/synth.hpp"
#include "vlafp/training.hpp"
