#pragma once
// Binary tensor format: "NLT1" magic, u32 rank, u32 extents, f64 payload,
// all little-endian, payload row-major.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace nlss {

void write_u16(std::ostream& s, uint16_t v);
void write_u32(std::ostream& s, uint32_t v);
void write_u64(std::ostream& s, uint64_t v);
void write_f64(std::ostream& s, double v);
void write_bytes(std::ostream& s, const void* p, size_t n);
void write_string(std::ostream& s, const std::string& v);  // u32 length prefix

uint16_t read_u16(std::istream& s);
uint32_t read_u32(std::istream& s);
uint64_t read_u64(std::istream& s);
double read_f64(std::istream& s);
void read_bytes(std::istream& s, void* p, size_t n);
std::string read_string(std::istream& s);

void write_nlt1(std::ostream& s, const std::vector<int64_t>& shape,
                const std::vector<double>& data);
void read_nlt1(std::istream& s, std::vector<int64_t>& shape,
               std::vector<double>& data);

void save_nlt1_file(const std::string& path, const std::vector<int64_t>& shape,
                    const std::vector<double>& data);
void load_nlt1_file(const std::string& path, std::vector<int64_t>& shape,
                    std::vector<double>& data);

} // namespace nlss
