#include "tcasr/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tcasr {

namespace {

constexpr char kMagic[6] = {'T', 'C', 'A', 'S', 'R', '1'};

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint error: truncated file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& os, const double* v, size_t n) {
  static_assert(sizeof(double) == 8);
  // x86/aarch64 are little-endian; raw write is the LE encoding
  os.write(reinterpret_cast<const char*>(v), static_cast<std::streamsize>(n * 8));
}

void read_f64(std::istream& is, double* v, size_t n) {
  is.read(reinterpret_cast<char*>(v), static_cast<std::streamsize>(n * 8));
  if (!is) throw std::runtime_error("checkpoint error: truncated values");
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint error: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, static_cast<uint32_t>(params.items().size()));
  for (const auto& it : params.items()) {
    write_u32(os, static_cast<uint32_t>(it.name.size()));
    os.write(it.name.data(), static_cast<std::streamsize>(it.name.size()));
    write_u32(os, static_cast<uint32_t>(it.tensor->shape.size()));
    for (int d : it.tensor->shape) write_u32(os, static_cast<uint32_t>(d));
    write_f64(os, it.tensor->values.data(), it.tensor->values.size());
  }
  if (!os) throw std::runtime_error("checkpoint error: write failed for " + path);
}

std::vector<ParamRecord> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint error: cannot open " + path);
  char magic[6];
  is.read(magic, 6);
  if (!is || std::memcmp(magic, kMagic, 6) != 0) {
    throw std::runtime_error("checkpoint error: bad magic in " + path);
  }
  const uint32_t count = read_u32(is);
  std::vector<ParamRecord> records;
  records.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    ParamRecord rec;
    const uint32_t name_len = read_u32(is);
    rec.name.resize(name_len);
    is.read(rec.name.data(), name_len);
    if (!is) throw std::runtime_error("checkpoint error: truncated name");
    const uint32_t rank = read_u32(is);
    size_t n = 1;
    rec.shape.resize(rank);
    for (uint32_t r = 0; r < rank; ++r) {
      rec.shape[r] = static_cast<int>(read_u32(is));
      n *= static_cast<size_t>(rec.shape[r]);
    }
    rec.values.resize(n);
    read_f64(is, rec.values.data(), n);
    records.push_back(std::move(rec));
  }
  return records;
}

void apply_records(const std::vector<ParamRecord>& records, ParamStore& params) {
  if (records.size() != params.items().size()) {
    throw std::runtime_error("checkpoint error: parameter count mismatch");
  }
  for (size_t i = 0; i < records.size(); ++i) {
    auto& p = *params.items()[i].tensor;
    const auto& rec = records[i];
    if (rec.name != params.items()[i].name || rec.shape != p.shape) {
      throw std::runtime_error("checkpoint error: mismatch at parameter " + rec.name);
    }
    p.values = rec.values;
  }
}

std::vector<ParamRecord> average_checkpoints(const std::vector<std::string>& paths) {
  if (paths.empty()) throw std::invalid_argument("checkpoint error: no files to average");
  std::vector<ParamRecord> acc = load_checkpoint(paths[0]);
  for (size_t k = 1; k < paths.size(); ++k) {
    const auto next = load_checkpoint(paths[k]);
    if (next.size() != acc.size()) {
      throw std::runtime_error("checkpoint error: parameter count mismatch across files");
    }
    for (size_t i = 0; i < acc.size(); ++i) {
      if (next[i].name != acc[i].name || next[i].shape != acc[i].shape) {
        throw std::runtime_error("checkpoint error: mismatch at parameter " + next[i].name);
      }
      for (size_t j = 0; j < acc[i].values.size(); ++j) {
        acc[i].values[j] += next[i].values[j];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(paths.size());
  for (auto& rec : acc) {
    for (double& v : rec.values) v *= inv;
  }
  return acc;
}

}  // namespace tcasr
