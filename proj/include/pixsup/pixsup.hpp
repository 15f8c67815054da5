// Copyright 2026 The pixsup Authors.
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

// Umbrella header.
#ifndef PIXSUP_PIXSUP_HPP
#define PIXSUP_PIXSUP_HPP

#include "pixsup/backbone.hpp"
#include "pixsup/cam.hpp"
#include "pixsup/checkpoint.hpp"
#include "pixsup/config.hpp"
#include "pixsup/dataset.hpp"
#include "pixsup/errors.hpp"
#include "pixsup/eval.hpp"
#include "pixsup/image_io.hpp"
#include "pixsup/inference.hpp"
#include "pixsup/mam.hpp"
#include "pixsup/multiscale.hpp"
#include "pixsup/optim.hpp"
#include "pixsup/params.hpp"
#include "pixsup/rcm.hpp"
#include "pixsup/resample.hpp"
#include "pixsup/tensor.hpp"
#include "pixsup/trainer.hpp"

#endif  // PIXSUP_PIXSUP_HPP
