#pragma once

#include "ssdml/baselines.hpp"
#include "ssdml/common.hpp"
#include "ssdml/data.hpp"
#include "ssdml/encoder.hpp"
#include "ssdml/eval.hpp"
#include "ssdml/gradcheck.hpp"
#include "ssdml/graph.hpp"
#include "ssdml/manifold.hpp"
#include "ssdml/metric.hpp"
#include "ssdml/mining.hpp"
#include "ssdml/propagation.hpp"
#include "ssdml/trainer.hpp"
