#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "d3ids/errors.hpp"
#include "d3ids/types.hpp"

namespace d3ids {

// Packs "a.b.c.d":port into a 48-bit integer: four 8-bit octets followed by
// the 16-bit port, read as one binary string.
inline Address node_id_from_address(const std::string& ip, int port) {
  if (port < 0 || port > 65535)
    throw DataError("address: port out of range: " + std::to_string(port));
  uint64_t r = 0;
  int octets = 0;
  size_t pos = 0;
  while (pos <= ip.size()) {
    size_t dot = ip.find('.', pos);
    std::string part = ip.substr(pos, dot == std::string::npos
                                          ? std::string::npos
                                          : dot - pos);
    if (part.empty() || part.size() > 3 ||
        part.find_first_not_of("0123456789") != std::string::npos)
      throw DataError("address: malformed octet '" + part + "' in ip '" + ip +
                      "'");
    int v = std::stoi(part);
    if (v > 255)
      throw DataError("address: octet " + std::to_string(octets + 1) +
                      " exceeds 255 in ip '" + ip + "'");
    r = (r << 8) | static_cast<uint64_t>(v);
    ++octets;
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  if (octets != 4)
    throw DataError("address: expected 4 octets, got " +
                    std::to_string(octets) + " in ip '" + ip + "'");
  return (r << 16) | static_cast<uint64_t>(port);
}

// Dense node ids: sorted-unique addresses mapped to their sort rank. Every
// id in 0..V-1 maps back to exactly one address.
class NodeRegistry {
 public:
  NodeRegistry() = default;

  template <typename It>
  static NodeRegistry build(It first, It last) {
    NodeRegistry reg;
    reg.addresses_.assign(first, last);
    std::sort(reg.addresses_.begin(), reg.addresses_.end());
    reg.addresses_.erase(
        std::unique(reg.addresses_.begin(), reg.addresses_.end()),
        reg.addresses_.end());
    for (size_t i = 0; i < reg.addresses_.size(); ++i)
      reg.index_[reg.addresses_[i]] = static_cast<NodeId>(i);
    return reg;
  }

  NodeId id_of(Address a) const {
    auto it = index_.find(a);
    if (it == index_.end())
      throw DataError("registry: unknown address " + std::to_string(a));
    return it->second;
  }

  bool contains(Address a) const { return index_.count(a) > 0; }
  Address address_of(NodeId id) const { return addresses_.at(id); }
  int size() const { return static_cast<int>(addresses_.size()); }
  const std::vector<Address>& addresses() const { return addresses_; }

 private:
  std::vector<Address> addresses_;
  std::map<Address, NodeId> index_;
};

inline std::string ip_of_address(Address a) {
  uint64_t ip = a >> 16;
  return std::to_string((ip >> 24) & 0xff) + "." +
         std::to_string((ip >> 16) & 0xff) + "." +
         std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

inline int port_of_address(Address a) { return static_cast<int>(a & 0xffff); }

}  // namespace d3ids
