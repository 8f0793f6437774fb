#pragma once

#include "grouprank/aesthetics.hpp"
#include "grouprank/brisque.hpp"
#include "grouprank/cnn.hpp"
#include "grouprank/fusion.hpp"
#include "grouprank/gamma.hpp"
#include "grouprank/manifest.hpp"
#include "grouprank/metrics.hpp"
#include "grouprank/png.hpp"
#include "grouprank/raster.hpp"
#include "grouprank/rng.hpp"
#include "grouprank/scnn.hpp"
#include "grouprank/serialize.hpp"
#include "grouprank/synthetic.hpp"
