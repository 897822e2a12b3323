#include "pdns/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pdns {
namespace {

constexpr char kMagic[5] = {'P', 'D', 'N', 'S', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_array(std::ostream& os, const Array& a) {
  write_u64(os, a.shape.size());
  for (std::size_t s : a.shape) write_u64(os, s);
  std::vector<float> buf(a.data.begin(), a.data.end());
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

Array read_array(std::istream& is) {
  const std::uint64_t rank = read_u64(is);
  if (rank > 8) throw std::runtime_error("checkpoint: implausible array rank");
  std::vector<std::size_t> shape(rank);
  std::size_t n = 1;
  for (std::uint64_t i = 0; i < rank; ++i) {
    shape[i] = static_cast<std::size_t>(read_u64(is));
    n *= shape[i];
  }
  std::vector<float> buf(n);
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!is) throw std::runtime_error("checkpoint: truncated array data");
  Array a;
  a.shape = std::move(shape);
  a.data.assign(buf.begin(), buf.end());
  return a;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& ps) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u64(os, ps.step_count);
  const std::size_t per_group = ps.params.size();
  write_u64(os, 4 * per_group);
  for (const auto* group : {&ps.params, &ps.adam_m, &ps.adam_v, &ps.ema})
    for (const Array& a : *group) write_array(os, a);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[5];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  ParamStore ps;
  ps.step_count = read_u64(is);
  const std::uint64_t count = read_u64(is);
  if (count % 4 != 0)
    throw std::runtime_error("checkpoint: array count not divisible by 4");
  const std::size_t per_group = count / 4;
  for (std::size_t g = 0; g < 4; ++g) {
    std::vector<Array>* group =
        g == 0 ? &ps.params : g == 1 ? &ps.adam_m : g == 2 ? &ps.adam_v : &ps.ema;
    for (std::size_t i = 0; i < per_group; ++i) group->push_back(read_array(is));
  }
  return ps;
}

bool checkpoint_matches(const ParamStore& ps,
                        const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) return false;
  const std::size_t layers = widths.size() - 1;
  if (ps.params.size() != 2 * layers) return false;
  for (std::size_t l = 0; l < layers; ++l) {
    const Array& w = ps.params[2 * l];
    const Array& b = ps.params[2 * l + 1];
    if (w.shape.size() != 2 || w.shape[0] != widths[l + 1] ||
        w.shape[1] != widths[l])
      return false;
    if (b.shape.size() != 1 || b.shape[0] != widths[l + 1]) return false;
  }
  return true;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Matrix& values, const std::string& target_hash) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("csv: cannot open " + path);
  if (!target_hash.empty()) os << "# target_hash=" << target_hash << "\n";
  for (std::size_t i = 0; i < header.size(); ++i)
    os << header[i] << (i + 1 < header.size() ? "," : "");
  os << "\n";
  char buf[40];
  for (std::size_t r = 0; r < values.rows; ++r) {
    for (std::size_t c = 0; c < values.cols; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", values.at(r, c));
      os << buf << (c + 1 < values.cols ? "," : "");
    }
    os << "\n";
  }
  if (!os) throw std::runtime_error("csv: write failed for " + path);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("csv: cannot open " + path);
  CsvTable table;
  std::string line;
  std::vector<Vec> rows;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("target_hash=");
      if (pos != std::string::npos) table.target_hash = line.substr(pos + 12);
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    if (!have_header) {
      while (std::getline(ss, cell, ',')) table.header.push_back(cell);
      have_header = true;
      continue;
    }
    Vec row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != table.header.size())
      throw std::runtime_error("csv: ragged row in " + path);
    rows.push_back(std::move(row));
  }
  if (!have_header) throw std::runtime_error("csv: missing header in " + path);
  table.values = Matrix(rows.size(), table.header.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r].begin(), rows[r].end(), table.values.row(r));
  return table;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace pdns
