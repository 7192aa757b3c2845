/*
 * Copyright 2026 The rankreward Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


// Umbrella header.

#pragma once

#include "rankreward/agent.hpp"
#include "rankreward/dataset.hpp"
#include "rankreward/envs.hpp"
#include "rankreward/errors.hpp"
#include "rankreward/experiment.hpp"
#include "rankreward/feedback.hpp"
#include "rankreward/metrics_io.hpp"
#include "rankreward/nn.hpp"
#include "rankreward/objectives.hpp"
#include "rankreward/rating_service.hpp"
#include "rankreward/reward_model.hpp"
#include "rankreward/rng.hpp"
#include "rankreward/softrank.hpp"
#include "rankreward/teacher.hpp"
#include "rankreward/theory_oracle.hpp"
