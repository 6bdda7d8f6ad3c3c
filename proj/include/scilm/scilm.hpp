#pragma once

// Umbrella header for the scilm library: class-imbalance-aware zero-shot
// classification with semantics-guided visual prototypes.

#include "scilm/compare.hpp"
#include "scilm/config.hpp"
#include "scilm/dataset.hpp"
#include "scilm/error.hpp"
#include "scilm/eval.hpp"
#include "scilm/loss.hpp"
#include "scilm/matrix.hpp"
#include "scilm/model.hpp"
#include "scilm/rng.hpp"
#include "scilm/sampler.hpp"
#include "scilm/synthetic.hpp"
#include "scilm/tape.hpp"
#include "scilm/train.hpp"
