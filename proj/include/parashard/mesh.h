/* Copyright 2026 The Parashard Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef PARASHARD_MESH_H_
#define PARASHARD_MESH_H_

#include <cstdint>
#include <string>
#include <vector>

namespace parashard {

struct ClusterConfig {
  int machines = 1;
  int gpus_per_machine = 1;
  double intra_alpha = 1e-6;        // seconds per message inside a machine
  double intra_bandwidth = 100e9;   // bytes/sec inside a machine
  double inter_alpha = 5e-6;        // seconds per message across machines
  double inter_bandwidth = 10e9;    // bytes/sec across machines
  double device_flops = 10e12;      // flops/sec per device
  int64_t memory_bytes = 16LL << 30;

  int devices() const { return machines * gpus_per_machine; }
  void CheckValid() const;

  static ClusterConfig FromJsonText(const std::string& text);
  std::string ToJsonText() const;
};

// Logical device mesh; per-axis link parameters are fixed when the mesh is
// derived from a cluster (an axis crossing machines uses the inter link).
struct DeviceMesh {
  std::vector<int> dims;
  std::vector<double> bandwidth;  // bytes/sec per axis
  std::vector<double> alpha;      // seconds per message per axis

  int num_axes() const { return static_cast<int>(dims.size()); }
  int64_t devices() const {
    int64_t n = 1;
    for (int d : dims) n *= d;
    return n;
  }
  void CheckValid(int64_t expected_devices) const;
  std::string Descriptor() const;  // e.g. "2x4"
};

}  // namespace parashard

#endif  // PARASHARD_MESH_H_
