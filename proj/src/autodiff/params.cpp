#include "asbf/autodiff/params.hpp"

#include <fstream>
#include <iterator>

#include "asbf/binary_io.hpp"
#include "asbf/errors.hpp"

namespace asbf {

namespace io {

void write_file(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<char> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return std::vector<char>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace io

namespace ad {

Parameter& ParameterSet::add(const std::string& name, Shape shape, std::vector<double> value) {
  if (numel(shape) != value.size()) {
    throw DimensionError("parameter " + name + ": " + std::to_string(value.size()) +
                         " values for shape " + to_string(shape));
  }
  auto [it, inserted] = entries_.emplace(name, Parameter{std::move(shape), std::move(value)});
  if (!inserted) throw ContractError("duplicate parameter name: " + name);
  return it->second;
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

Tensor ParameterSet::bind(Tape& tape, const std::string& name) const {
  const Parameter& p = at(name);
  return tape.parameter(name, p.shape, p.value);
}

std::size_t ParameterSet::total_size() const {
  std::size_t n = 0;
  for (const auto& [_, p] : entries_) n += p.value.size();
  return n;
}

std::vector<char> encode_mbm1(const NamedArrays& entries) {
  io::ByteWriter w;
  w.bytes("MBM1");
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, p] : entries) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) w.u32(static_cast<std::uint32_t>(d));
    w.f64s(p.value.data(), p.value.size());
  }
  return w.buffer();
}

NamedArrays decode_mbm1(std::vector<char> bytes) {
  io::ByteReader r(std::move(bytes));
  r.expect_magic("MBM1");
  const std::uint32_t count = r.u32();
  NamedArrays out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::size_t at = r.offset();
    const std::uint32_t len = r.u32();
    if (len > r.remaining()) {
      throw FormatError("entry name length " + std::to_string(len) + " exceeds file at byte offset " +
                        std::to_string(at));
    }
    std::string name = r.bytes(len);
    const std::uint32_t rank = r.u32();
    if (rank > 16) {
      throw FormatError("implausible rank " + std::to_string(rank) + " at byte offset " +
                        std::to_string(r.offset() - 4));
    }
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.u32();
      n *= d;
    }
    if (n * sizeof(double) > r.remaining()) {
      throw FormatError("truncated file: entry '" + name + "' needs " +
                        std::to_string(n * sizeof(double)) + " bytes at byte offset " +
                        std::to_string(r.offset()) + ", " + std::to_string(r.remaining()) +
                        " available");
    }
    std::vector<double> value(n);
    r.f64s(value.data(), n);
    if (!out.emplace(std::move(name), Parameter{std::move(shape), std::move(value)}).second) {
      throw FormatError("duplicate entry name at byte offset " + std::to_string(at));
    }
  }
  r.expect_end();
  return out;
}

void write_mbm1(const std::string& path, const NamedArrays& entries) {
  io::write_file(path, encode_mbm1(entries));
}

NamedArrays read_mbm1(const std::string& path) { return decode_mbm1(io::read_file(path)); }

void save_parameters(const std::string& path, const ParameterSet& params) {
  NamedArrays entries;
  for (const auto& [name, p] : params) entries.emplace(name, p);
  write_mbm1(path, entries);
}

ParameterSet load_parameters(const std::string& path) {
  ParameterSet params;
  for (auto& [name, p] : read_mbm1(path)) params.add(name, p.shape, p.value);
  return params;
}

}  // namespace ad
}  // namespace asbf
