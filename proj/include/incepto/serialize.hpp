#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "incepto/tensor.hpp"

// Little-endian binary primitives and a named-tensor record list. Layout of a
// record list:
//   u64 count
//   count x { u32 name_len, name bytes, u32 rank, rank x u64 dims, numel x f64 }

namespace incepto::io {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, const std::string& s);

std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in, std::size_t max_len = 1u << 26);

void write_arrays(std::ostream& out, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_arrays(std::istream& in);

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace incepto::io
