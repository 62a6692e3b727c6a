// Copyright 2026 The SMES Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include "smes/bench.hpp"
#include "smes/checkpoint.hpp"
#include "smes/config.hpp"
#include "smes/data.hpp"
#include "smes/error.hpp"
#include "smes/execution.hpp"
#include "smes/forward.hpp"
#include "smes/load_balance.hpp"
#include "smes/matrix.hpp"
#include "smes/metrics.hpp"
#include "smes/model.hpp"
#include "smes/routing.hpp"
#include "smes/text.hpp"
#include "smes/training.hpp"
#include "smes/workspace.hpp"
