#pragma once

#include "hfw/tensor.hpp"
#include "hfw/ops.hpp"
#include "hfw/autodiff.hpp"
#include "hfw/gradcheck.hpp"
#include "hfw/wavelet.hpp"
#include "hfw/zca.hpp"
#include "hfw/model.hpp"
#include "hfw/adam.hpp"
#include "hfw/dataset.hpp"
#include "hfw/training.hpp"
#include "hfw/stylize.hpp"
#include "hfw/metrics.hpp"
#include "hfw/run_config.hpp"
#include "hfw/image_io.hpp"
#include "hfw/weights_io.hpp"
