#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace hsd {

enum class TensorDType { kF32, kF64 };

/// Named matrix view for writing.
struct TensorRef {
    std::string name;
    const Eigen::MatrixXd* value = nullptr;
};

/// Writes a weight blob: 8-byte magic "HSDWGT01", little-endian u64 header
/// length, a JSON header {format_version, tensors: [{name, dtype, shape,
/// offset, nbytes}], data_sha256}, then row-major tensor data. The file is
/// written to a temporary name and renamed into place.
void write_tensors(const std::filesystem::path& path, const std::vector<TensorRef>& tensors,
                   TensorDType dtype = TensorDType::kF64);

/// Reads a blob written by write_tensors (or by tools/convert_bert_weights.py).
/// Throws CheckpointError for missing files, bad magic, unsupported versions
/// and data that fails the checksum.
std::map<std::string, Eigen::MatrixXd> read_tensors(const std::filesystem::path& path);

/// Hex SHA-256 over the data section as recorded in the header.
std::string tensor_file_checksum(const std::filesystem::path& path);

/// Writes `content` to path via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

} // namespace hsd
