#pragma once

// Umbrella header for the full toolkit.

#include "arhuaco/config.hpp"
#include "arhuaco/dataset.hpp"
#include "arhuaco/engine.hpp"
#include "arhuaco/error.hpp"
#include "arhuaco/features.hpp"
#include "arhuaco/generator.hpp"
#include "arhuaco/gradcheck_suite.hpp"
#include "arhuaco/ingest.hpp"
#include "arhuaco/metrics.hpp"
#include "arhuaco/nn.hpp"
#include "arhuaco/rng.hpp"
#include "arhuaco/serialize.hpp"
#include "arhuaco/svm.hpp"
#include "arhuaco/synth.hpp"
#include "arhuaco/version.hpp"
