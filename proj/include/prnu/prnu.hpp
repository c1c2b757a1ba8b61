#pragma once

#include "prnu/benchmark.hpp"
#include "prnu/denoise.hpp"
#include "prnu/manifest.hpp"
#include "prnu/matcher.hpp"
#include "prnu/metrics.hpp"
#include "prnu/neural.hpp"
#include "prnu/parallel.hpp"
#include "prnu/pipeline.hpp"
#include "prnu/plane.hpp"
#include "prnu/png_io.hpp"
#include "prnu/random.hpp"
#include "prnu/signal.hpp"
#include "prnu/simulator.hpp"
#include "prnu/store.hpp"
#include "prnu/train.hpp"
