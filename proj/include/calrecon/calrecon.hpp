#pragma once

#include "ablation.hpp"
#include "cg.hpp"
#include "errors.hpp"
#include "fft.hpp"
#include "forward_model.hpp"
#include "fpc.hpp"
#include "image.hpp"
#include "mask.hpp"
#include "metrics.hpp"
#include "phantom.hpp"
#include "pipeline.hpp"
#include "report_io.hpp"
#include "rng.hpp"
#include "rpa.hpp"
#include "sampler.hpp"
#include "score_prior.hpp"
#include "tensor_io.hpp"
#include "unet.hpp"
#include "unet_train.hpp"
