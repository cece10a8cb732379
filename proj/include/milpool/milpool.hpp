#pragma once

#include <milpool/archive.hpp>
#include <milpool/checkpoint.hpp>
#include <milpool/dataset.hpp>
#include <milpool/error.hpp>
#include <milpool/keyvalue.hpp>
#include <milpool/matrix.hpp>
#include <milpool/metrics.hpp>
#include <milpool/model.hpp>
#include <milpool/network.hpp>
#include <milpool/optimizer.hpp>
#include <milpool/pooling.hpp>
#include <milpool/rng.hpp>
#include <milpool/sampler.hpp>
#include <milpool/synthetic.hpp>
#include <milpool/trainer.hpp>
