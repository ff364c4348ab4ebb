#pragma once

#include "acgan/adam.hpp"
#include "acgan/augment.hpp"
#include "acgan/batches.hpp"
#include "acgan/batchnorm.hpp"
#include "acgan/checkpoint.hpp"
#include "acgan/conv.hpp"
#include "acgan/cross_validate.hpp"
#include "acgan/dataset.hpp"
#include "acgan/folds.hpp"
#include "acgan/gradcheck.hpp"
#include "acgan/image_io.hpp"
#include "acgan/loss.hpp"
#include "acgan/metrics.hpp"
#include "acgan/model.hpp"
#include "acgan/ops.hpp"
#include "acgan/param_set.hpp"
#include "acgan/rng.hpp"
#include "acgan/run_config.hpp"
#include "acgan/tensor.hpp"
#include "acgan/trainer.hpp"
