#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pdns/approximator.hpp"
#include "pdns/common.hpp"

namespace pdns {

/// Binary checkpoint: magic "PDNS1", little-endian u64 step_count and array
/// count, then per array a shape header (u64 rank, u64 dims) followed by raw
/// little-endian float32 data. Arrays are params, adam_m, adam_v, ema in
/// that order.
void save_checkpoint(const std::string& path, const ParamStore& ps);
ParamStore load_checkpoint(const std::string& path);

/// True when the checkpoint arrays match the given layer widths.
bool checkpoint_matches(const ParamStore& ps,
                        const std::vector<std::size_t>& widths);

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
  std::string target_hash;  // from the leading "# target_hash=..." line
};

/// Writes rows with 17 significant digits; hash goes into a leading comment.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Matrix& values, const std::string& target_hash);

CsvTable read_csv(const std::string& path);

/// FNV-1a hash of a canonical string, rendered as 16 hex characters.
std::string fnv1a_hex(const std::string& text);

}  // namespace pdns
