// Copyright 2026 The PAS Authors
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

/// \file
/// Umbrella header.

#ifndef PAS_PAS_HPP
#define PAS_PAS_HPP

#include "pas/attacks.hpp"
#include "pas/checkpoint.hpp"
#include "pas/common.hpp"
#include "pas/dataset.hpp"
#include "pas/eval.hpp"
#include "pas/model.hpp"
#include "pas/ops.hpp"
#include "pas/reparam.hpp"
#include "pas/search.hpp"
#include "pas/tensor.hpp"
#include "pas/train.hpp"

#endif  // PAS_PAS_HPP
