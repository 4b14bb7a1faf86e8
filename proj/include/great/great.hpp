#pragma once

#include "great/baselines.hpp"
#include "great/checkpoint.hpp"
#include "great/decoder.hpp"
#include "great/encoder.hpp"
#include "great/env.hpp"
#include "great/errors.hpp"
#include "great/eval.hpp"
#include "great/gradcheck.hpp"
#include "great/instance.hpp"
#include "great/params.hpp"
#include "great/rng.hpp"
#include "great/solve.hpp"
#include "great/tensor.hpp"
#include "great/training.hpp"
