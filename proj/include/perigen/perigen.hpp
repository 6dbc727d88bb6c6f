#pragma once

#include "perigen/bayes.hpp"
#include "perigen/bench.hpp"
#include "perigen/errors.hpp"
#include "perigen/form_io.hpp"
#include "perigen/metrics.hpp"
#include "perigen/nets.hpp"
#include "perigen/optim.hpp"
#include "perigen/parallel.hpp"
#include "perigen/pbt.hpp"
#include "perigen/plot.hpp"
#include "perigen/rng.hpp"
#include "perigen/signals.hpp"
#include "perigen/text.hpp"
#include "perigen/train.hpp"
