#pragma once

// Umbrella header for the joem library: joint visual-semantic embeddings for
// generalized zero-shot segmentation at desk scale.

#include "joem/config.hpp"
#include "joem/dataset.hpp"
#include "joem/error.hpp"
#include "joem/feature_map.hpp"
#include "joem/grad_check.hpp"
#include "joem/inference.hpp"
#include "joem/loss_probe.hpp"
#include "joem/losses.hpp"
#include "joem/metrics.hpp"
#include "joem/optim.hpp"
#include "joem/pgm.hpp"
#include "joem/resample.hpp"
#include "joem/rng.hpp"
#include "joem/semantic.hpp"
#include "joem/split.hpp"
#include "joem/tensor_file.hpp"
#include "joem/train.hpp"
#include "joem/visual_encoder.hpp"
