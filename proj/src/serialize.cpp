#include "nlss/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

namespace nlss {

void write_bytes(std::ostream& s, const void* p, size_t n) {
    s.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!s) throw std::runtime_error("serialize: write failed");
}
void write_u16(std::ostream& s, uint16_t v) { write_bytes(s, &v, 2); }
void write_u32(std::ostream& s, uint32_t v) { write_bytes(s, &v, 4); }
void write_u64(std::ostream& s, uint64_t v) { write_bytes(s, &v, 8); }
void write_f64(std::ostream& s, double v) { write_bytes(s, &v, 8); }
void write_string(std::ostream& s, const std::string& v) {
    write_u32(s, static_cast<uint32_t>(v.size()));
    write_bytes(s, v.data(), v.size());
}

void read_bytes(std::istream& s, void* p, size_t n) {
    s.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(s.gcount()) != n)
        throw std::runtime_error("serialize: truncated input");
}
uint16_t read_u16(std::istream& s) { uint16_t v; read_bytes(s, &v, 2); return v; }
uint32_t read_u32(std::istream& s) { uint32_t v; read_bytes(s, &v, 4); return v; }
uint64_t read_u64(std::istream& s) { uint64_t v; read_bytes(s, &v, 8); return v; }
double read_f64(std::istream& s) { double v; read_bytes(s, &v, 8); return v; }
std::string read_string(std::istream& s) {
    uint32_t n = read_u32(s);
    std::string v(n, '\0');
    if (n) read_bytes(s, v.data(), n);
    return v;
}

void write_nlt1(std::ostream& s, const std::vector<int64_t>& shape,
                const std::vector<double>& data) {
    write_bytes(s, "NLT1", 4);
    write_u32(s, static_cast<uint32_t>(shape.size()));
    size_t n = 1;
    for (int64_t e : shape) {
        write_u32(s, static_cast<uint32_t>(e));
        n *= static_cast<size_t>(e);
    }
    if (n != data.size()) throw std::runtime_error("nlt1: shape/payload mismatch");
    write_bytes(s, data.data(), n * sizeof(double));
}

void read_nlt1(std::istream& s, std::vector<int64_t>& shape,
               std::vector<double>& data) {
    char magic[4];
    read_bytes(s, magic, 4);
    if (std::memcmp(magic, "NLT1", 4) != 0) throw std::runtime_error("nlt1: bad magic");
    uint32_t rank = read_u32(s);
    if (rank > 8) throw std::runtime_error("nlt1: implausible rank");
    shape.resize(rank);
    size_t n = 1;
    for (uint32_t i = 0; i < rank; ++i) {
        uint32_t e = read_u32(s);
        if (e == 0) throw std::runtime_error("nlt1: zero extent");
        shape[i] = e;
        n *= e;
    }
    data.resize(n);
    if (n) read_bytes(s, data.data(), n * sizeof(double));
}

void save_nlt1_file(const std::string& path, const std::vector<int64_t>& shape,
                    const std::vector<double>& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    write_nlt1(f, shape, data);
}

void load_nlt1_file(const std::string& path, std::vector<int64_t>& shape,
                    std::vector<double>& data) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    read_nlt1(f, shape, data);
}

} // namespace nlss
