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

#include "parashard/mesh.h"

#include <stdexcept>

#include "nlohmann/json.hpp"

namespace parashard {

using json = nlohmann::ordered_json;

void ClusterConfig::CheckValid() const {
  if (machines < 1 || gpus_per_machine < 1) throw std::runtime_error("cluster: device counts must be positive");
  if (intra_bandwidth <= 0 || inter_bandwidth <= 0) throw std::runtime_error("cluster: bandwidths must be positive");
  if (intra_alpha < 0 || inter_alpha < 0) throw std::runtime_error("cluster: alphas must be nonnegative");
  if (device_flops <= 0) throw std::runtime_error("cluster: device_flops must be positive");
  if (memory_bytes <= 0) throw std::runtime_error("cluster: memory_bytes must be positive");
}

ClusterConfig ClusterConfig::FromJsonText(const std::string& text) {
  json j = json::parse(text);
  ClusterConfig c;
  c.machines = j.value("machines", 1);
  c.gpus_per_machine = j.value("gpus_per_machine", 1);
  c.intra_alpha = j.value("intra_alpha", c.intra_alpha);
  c.intra_bandwidth = j.value("intra_bandwidth", c.intra_bandwidth);
  c.inter_alpha = j.value("inter_alpha", c.inter_alpha);
  c.inter_bandwidth = j.value("inter_bandwidth", c.inter_bandwidth);
  c.device_flops = j.value("device_flops", c.device_flops);
  c.memory_bytes = j.value("memory_bytes", c.memory_bytes);
  c.CheckValid();
  return c;
}

std::string ClusterConfig::ToJsonText() const {
  json j;
  j["machines"] = machines;
  j["gpus_per_machine"] = gpus_per_machine;
  j["intra_alpha"] = intra_alpha;
  j["intra_bandwidth"] = intra_bandwidth;
  j["inter_alpha"] = inter_alpha;
  j["inter_bandwidth"] = inter_bandwidth;
  j["device_flops"] = device_flops;
  j["memory_bytes"] = memory_bytes;
  return j.dump(2) + "\n";
}

void DeviceMesh::CheckValid(int64_t expected_devices) const {
  if (dims.empty()) throw std::runtime_error("mesh: no axes");
  for (int d : dims) {
    if (d < 1) throw std::runtime_error("mesh: axis sizes must be positive");
  }
  if (bandwidth.size() != dims.size() || alpha.size() != dims.size()) {
    throw std::runtime_error("mesh: per-axis link parameters missing");
  }
  for (double b : bandwidth) {
    if (b <= 0) throw std::runtime_error("mesh: bandwidths must be positive");
  }
  if (expected_devices > 0 && devices() != expected_devices) {
    throw std::runtime_error("mesh: axis product does not match device count");
  }
}

std::string DeviceMesh::Descriptor() const {
  std::string s;
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s;
}

}  // namespace parashard
