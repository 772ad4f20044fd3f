#pragma once

// Umbrella header for the dsnet knowledge-distillation library.

#include "dsnet/checkpoint.hpp"
#include "dsnet/config.hpp"
#include "dsnet/dataset.hpp"
#include "dsnet/error.hpp"
#include "dsnet/experiment.hpp"
#include "dsnet/gradcheck.hpp"
#include "dsnet/image.hpp"
#include "dsnet/io_util.hpp"
#include "dsnet/layers.hpp"
#include "dsnet/loss.hpp"
#include "dsnet/metrics.hpp"
#include "dsnet/model.hpp"
#include "dsnet/optimizer.hpp"
#include "dsnet/rng.hpp"
#include "dsnet/tensor.hpp"
#include "dsnet/train.hpp"
