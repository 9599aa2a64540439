#ifndef LIGHTDIFF_LIGHTDIFF_HPP
#define LIGHTDIFF_LIGHTDIFF_HPP

#include "lightdiff/backbone.hpp"
#include "lightdiff/checkpoint.hpp"
#include "lightdiff/chroma.hpp"
#include "lightdiff/config.hpp"
#include "lightdiff/degrade.hpp"
#include "lightdiff/image_io.hpp"
#include "lightdiff/metrics.hpp"
#include "lightdiff/nn.hpp"
#include "lightdiff/resize.hpp"
#include "lightdiff/rng.hpp"
#include "lightdiff/schedule.hpp"
#include "lightdiff/tdiff.hpp"
#include "lightdiff/tensor.hpp"
#include "lightdiff/toolkit.hpp"
#include "lightdiff/trainer.hpp"

#endif
