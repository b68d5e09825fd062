// Copyright 2026 The ARO Probe Authors.
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

#include <string>

#include "aro/image.hpp"

namespace aro::tools {

// Decodes any PNG libpng understands into 8-bit RGB (alpha is dropped).
image::RasterImage read_png(const std::string& path);

void write_png(const image::RasterImage& img, const std::string& path);

}  // namespace aro::tools
