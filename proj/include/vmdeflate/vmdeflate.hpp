// Copyright 2026 The vmdeflate Authors
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

/// \file vmdeflate/vmdeflate.hpp
/// \brief Everything at once.

#ifndef VMDEFLATE_VMDEFLATE_HPP
#define VMDEFLATE_VMDEFLATE_HPP

#include <vmdeflate/analysis.hpp>
#include <vmdeflate/config.hpp>
#include <vmdeflate/engine.hpp>
#include <vmdeflate/mechanism.hpp>
#include <vmdeflate/placement.hpp>
#include <vmdeflate/policy.hpp>
#include <vmdeflate/report.hpp>
#include <vmdeflate/resources.hpp>
#include <vmdeflate/trace.hpp>

#endif // VMDEFLATE_VMDEFLATE_HPP
