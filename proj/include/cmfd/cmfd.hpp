#pragma once

#include "cmfd/attacks.hpp"
#include "cmfd/benchmark.hpp"
#include "cmfd/convolution.hpp"
#include "cmfd/descriptor.hpp"
#include "cmfd/errors.hpp"
#include "cmfd/image.hpp"
#include "cmfd/io.hpp"
#include "cmfd/keypoints.hpp"
#include "cmfd/localization.hpp"
#include "cmfd/matching.hpp"
#include "cmfd/metrics.hpp"
#include "cmfd/morphology.hpp"
#include "cmfd/nn_index.hpp"
#include "cmfd/phrase.hpp"
#include "cmfd/pipeline.hpp"
#include "cmfd/random.hpp"
#include "cmfd/resample.hpp"
#include "cmfd/synthetic.hpp"
