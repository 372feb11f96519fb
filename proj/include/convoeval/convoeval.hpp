// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#pragma once

#include "convoeval/corpus.hpp"
#include "convoeval/error.hpp"
#include "convoeval/metrics.hpp"
#include "convoeval/predictor.hpp"
#include "convoeval/random.hpp"
#include "convoeval/report.hpp"
#include "convoeval/stats.hpp"
#include "convoeval/synth.hpp"
#include "convoeval/text.hpp"
#include "convoeval/topics.hpp"
#include "convoeval/unify.hpp"
