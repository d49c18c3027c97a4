// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The taskmat Authors

#pragma once

#include "taskmat/core.hpp"
#include "taskmat/embedding_store.hpp"
#include "taskmat/errors.hpp"
#include "taskmat/evaluate.hpp"
#include "taskmat/experiments.hpp"
#include "taskmat/multitask.hpp"
#include "taskmat/probe.hpp"
#include "taskmat/random.hpp"
#include "taskmat/report.hpp"
#include "taskmat/solver.hpp"
#include "taskmat/synthetic.hpp"
#include "taskmat/task_matrix.hpp"
