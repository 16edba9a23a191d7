#pragma once

#include <map>
#include <string>
#include <vector>

#include "asbf/autodiff/tensor.hpp"

namespace asbf::ad {

struct Parameter {
  Shape shape;
  std::vector<double> value;
};

inline bool operator==(const Parameter& a, const Parameter& b) {
  return a.shape == b.shape && a.value == b.value;
}

/// Named trainable arrays, ordered by name.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Shape shape, std::vector<double> value);
  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  /// Registers the parameter as a leaf on `tape`.
  Tensor bind(Tape& tape, const std::string& name) const;

  std::size_t total_size() const;
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

  bool operator==(const ParameterSet&) const = default;

 private:
  std::map<std::string, Parameter> entries_;
};

/// MBM1 container: magic "MBM1", u32 entry count, then per entry a u32
/// length-prefixed UTF-8 name, u32 rank, u32 dims, and raw f64 values, all
/// little-endian. Shared by parameter and model files.
using NamedArrays = std::map<std::string, Parameter>;

std::vector<char> encode_mbm1(const NamedArrays& entries);
NamedArrays decode_mbm1(std::vector<char> bytes);
void write_mbm1(const std::string& path, const NamedArrays& entries);
NamedArrays read_mbm1(const std::string& path);

void save_parameters(const std::string& path, const ParameterSet& params);
ParameterSet load_parameters(const std::string& path);

}  // namespace asbf::ad
