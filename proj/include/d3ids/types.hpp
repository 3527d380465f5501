#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace d3ids {

using NodeId = int32_t;
using Address = uint64_t;  // 48-bit ip:port packing, see address.hpp

// One raw traffic flow as read from CSV or the synthesizer.
struct FlowRecord {
  std::string src_ip;
  int src_port = 0;
  std::string dst_ip;
  int dst_port = 0;
  int64_t timestamp_ms = 0;
  int64_t duration_ms = 0;
  std::vector<double> features;
  int binary_label = 0;            // 0 benign, 1 attack
  std::string attack_class = "Benign";
};

// Timestamped edge handed to the model: endpoints, layer marks, time,
// duration and the min-max normalized feature vector.
struct EdgeEvent {
  NodeId src = -1;
  NodeId dst = -1;
  int src_layer = 0;
  int dst_layer = 0;
  int64_t t = 0;
  int64_t dt = 0;
  std::vector<double> features_norm;
  int binary_label = 0;
  std::string attack_class = "Benign";
};

enum class Split { Train, Val, Test };

}  // namespace d3ids
