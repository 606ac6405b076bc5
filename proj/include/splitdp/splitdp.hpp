#pragma once

#include "splitdp/attacks.hpp"
#include "splitdp/blob.hpp"
#include "splitdp/error.hpp"
#include "splitdp/harness.hpp"
#include "splitdp/latency.hpp"
#include "splitdp/metrics.hpp"
#include "splitdp/model.hpp"
#include "splitdp/privacy.hpp"
#include "splitdp/rng.hpp"
#include "splitdp/scenario.hpp"
#include "splitdp/tensor.hpp"
#include "splitdp/tinynet.hpp"
