// Copyright 2026 The n3pc Authors. All Rights Reserved.
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
// =============================================================================

#pragma once

#include "n3pc/compressors.hpp"
#include "n3pc/dataio.hpp"
#include "n3pc/error.hpp"
#include "n3pc/experiment.hpp"
#include "n3pc/matcore.hpp"
#include "n3pc/objectives.hpp"
#include "n3pc/rng.hpp"
#include "n3pc/simnet.hpp"
#include "n3pc/solvers.hpp"
#include "n3pc/trace.hpp"
#include "n3pc/verify.hpp"
#include "n3pc/wire.hpp"
