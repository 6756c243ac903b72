#include "incepto/serialize.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "incepto/errors.hpp"

namespace incepto::io {

namespace {

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
  if (!out) throw IoError("write failed");
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) throw FormatError("unexpected end of file");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { put_le(out, v); }
void write_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return get_le<std::uint64_t>(in); }
double read_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

std::string read_string(std::istream& in, std::size_t max_len) {
  const std::uint32_t n = read_u32(in);
  if (n > max_len) throw FormatError("string length " + std::to_string(n) + " exceeds limit");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (in.gcount() != static_cast<std::streamsize>(n)) throw FormatError("unexpected end of file");
  return s;
}

void write_arrays(std::ostream& out, const std::vector<NamedArray>& arrays) {
  write_u64(out, arrays.size());
  for (const NamedArray& a : arrays) {
    if (shape_numel(a.shape) != a.values.size()) throw ContractError("array " + a.name + " shape/size mismatch");
    write_string(out, a.name);
    write_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (std::size_t d : a.shape) write_u64(out, d);
    for (double v : a.values) write_f64(out, v);
  }
}

std::vector<NamedArray> read_arrays(std::istream& in) {
  const std::uint64_t count = read_u64(in);
  if (count > (1u << 24)) throw FormatError("implausible array count " + std::to_string(count));
  std::vector<NamedArray> arrays;
  arrays.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = read_string(in, 4096);
    const std::uint32_t rank = read_u32(in);
    if (rank > 8) throw FormatError("array " + a.name + " has rank " + std::to_string(rank));
    std::uint64_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.shape.push_back(read_u64(in));
      numel *= a.shape.back();
      if (numel > (1ull << 32)) throw FormatError("array " + a.name + " is too large");
    }
    a.values.resize(numel);
    for (double& v : a.values) v = read_f64(in);
    arrays.push_back(std::move(a));
  }
  return arrays;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace incepto::io
