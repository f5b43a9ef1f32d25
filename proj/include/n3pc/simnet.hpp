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
//
// In-process star network: one server, n devices. Every payload is encoded
// to bytes, metered, and decoded again on the receiving side, so the meter
// only ever counts bytes that were actually parsed.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "n3pc/error.hpp"
#include "n3pc/rng.hpp"
#include "n3pc/wire.hpp"

namespace n3pc {

struct ByteMeter {
  std::uint64_t uplink_total = 0;
  std::uint64_t downlink_total = 0;
  std::vector<std::uint64_t> uplink;    // per device
  std::vector<std::uint64_t> downlink;  // per device
  std::map<std::string, std::uint64_t> per_kind;

  explicit ByteMeter(int n = 0)
      : uplink(static_cast<std::size_t>(n), 0), downlink(static_cast<std::size_t>(n), 0) {}

  friend bool operator==(const ByteMeter&, const ByteMeter&) = default;
};

class Network {
 public:
  explicit Network(int n) : n_(n), meter_(n) {
    if (n < 1) throw Error("Network: need at least one device");
  }

  [[nodiscard]] int devices() const { return n_; }
  [[nodiscard]] const ByteMeter& meter() const { return meter_; }

  /// Device -> server. Returns the message as decoded by the server.
  Message send_up(int device, const Message& msg, Shape shape, const std::string& kind) {
    check(device);
    const auto bytes = encode(msg);
    count_up(device, bytes.size(), kind);
    return decode(bytes, shape);
  }

  /// Server -> each listed device; the payload is counted once per recipient.
  Message send_down(std::span<const int> devices, const Message& msg, Shape shape, const std::string& kind) {
    const auto bytes = encode(msg);
    for (int d : devices) {
      check(d);
      meter_.downlink[static_cast<std::size_t>(d)] += bytes.size();
      meter_.downlink_total += bytes.size();
      meter_.per_kind[kind] += bytes.size();
    }
    return decode(bytes, shape);
  }

  Message broadcast(const Message& msg, Shape shape, const std::string& kind) {
    return send_down(all_devices(), msg, shape, kind);
  }

  /// One-byte flag (e.g. a Bernoulli draw), device -> server.
  bool send_flag_up(int device, bool bit, const std::string& kind) {
    check(device);
    const std::uint8_t byte = bit ? 1 : 0;
    count_up(device, 1, kind);
    return byte != 0;
  }

  /// One-byte flag, server -> each listed device.
  bool send_flag_down(std::span<const int> devices, bool bit, const std::string& kind) {
    const std::uint8_t byte = bit ? 1 : 0;
    for (int d : devices) {
      check(d);
      meter_.downlink[static_cast<std::size_t>(d)] += 1;
      meter_.downlink_total += 1;
      meter_.per_kind[kind] += 1;
    }
    return byte != 0;
  }

  [[nodiscard]] std::span<const int> all_devices() const {
    if (all_.empty()) {
      all_.resize(static_cast<std::size_t>(n_));
      std::iota(all_.begin(), all_.end(), 0);
    }
    return all_;
  }

 private:
  void check(int device) const {
    if (device < 0 || device >= n_) throw Error("Network: device id " + std::to_string(device) + " out of range");
  }
  void count_up(int device, std::size_t bytes, const std::string& kind) {
    meter_.uplink[static_cast<std::size_t>(device)] += bytes;
    meter_.uplink_total += bytes;
    meter_.per_kind[kind] += bytes;
  }

  int n_;
  ByteMeter meter_;
  mutable std::vector<int> all_;
};

/// Uniform tau-subset of {0..n-1} without replacement (partial
/// Fisher-Yates), returned in ascending order.
inline std::vector<int> sample_subset(int n, int tau, RngStream& rng) {
  if (tau < 1 || tau > n) throw Error("sample_subset: tau must lie in [1, n]");
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  if (tau < n) {
    for (int t = 0; t < tau; ++t) {
      const auto j = t + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - t)));
      std::swap(pool[static_cast<std::size_t>(t)], pool[static_cast<std::size_t>(j)]);
    }
    pool.resize(static_cast<std::size_t>(tau));
    std::sort(pool.begin(), pool.end());
  }
  return pool;
}

}  // namespace n3pc
