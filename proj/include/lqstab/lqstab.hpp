/*
 Copyright 2026 The lqstab Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef LQSTAB_LQSTAB_HPP
#define LQSTAB_LQSTAB_HPP

#include "lqstab/errors.hpp"
#include "lqstab/experiment.hpp"
#include "lqstab/identification.hpp"
#include "lqstab/linalg.hpp"
#include "lqstab/parallel.hpp"
#include "lqstab/riccati.hpp"
#include "lqstab/rng.hpp"
#include "lqstab/stabilization.hpp"
#include "lqstab/system.hpp"

#endif  // LQSTAB_LQSTAB_HPP
