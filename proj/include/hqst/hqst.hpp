#pragma once

#include "hqst/errors.hpp"
#include "hqst/fock.hpp"
#include "hqst/histogram.hpp"
#include "hqst/io.hpp"
#include "hqst/linear_estimator.hpp"
#include "hqst/mle.hpp"
#include "hqst/synth.hpp"
