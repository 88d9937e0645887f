#include "hsd/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <atomic>
#include <thread>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "hsd/digest.hpp"
#include "hsd/error.hpp"

namespace hsd {
namespace {

static_assert(std::endian::native == std::endian::little, "weight blobs assume little-endian hosts");

constexpr char kMagic[8] = {'H', 'S', 'D', 'W', 'G', 'T', '0', '1'};
constexpr int kFormatVersion = 1;

struct Header {
    nlohmann::json json;
    std::uint64_t data_start = 0;
};

Header read_header(std::istream& in, const std::filesystem::path& path) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw CheckpointError("'" + path.string() + "' is not a weight blob (bad magic)");
    std::uint64_t header_len = 0;
    if (!in.read(reinterpret_cast<char*>(&header_len), sizeof header_len) || header_len > (1u << 30))
        throw CheckpointError("'" + path.string() + "': truncated header");
    std::string text(header_len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(header_len)))
        throw CheckpointError("'" + path.string() + "': truncated header");
    Header h;
    try {
        h.json = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("'" + path.string() + "': corrupted header: " + e.what());
    }
    const int version = h.json.value("format_version", -1);
    if (version != kFormatVersion)
        throw CheckpointError("'" + path.string() + "': unsupported weight format version " +
                              std::to_string(version) + " (expected " +
                              std::to_string(kFormatVersion) + ")");
    h.data_start = 16 + header_len;
    return h;
}

} // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::ostringstream suffix;
    static std::atomic<unsigned> counter{0};
    suffix << ".tmp." << ::getpid() << "." << std::this_thread::get_id() << "." << counter++;
    auto tmp = path;
    tmp += suffix.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("short write to '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

void write_tensors(const std::filesystem::path& path, const std::vector<TensorRef>& tensors,
                   TensorDType dtype) {
    std::string data;
    nlohmann::json entries = nlohmann::json::array();
    const std::size_t width = dtype == TensorDType::kF64 ? 8 : 4;
    for (const auto& t : tensors) {
        const auto& m = *t.value;
        const std::size_t offset = data.size();
        const std::size_t nbytes = static_cast<std::size_t>(m.size()) * width;
        data.resize(offset + nbytes);
        char* dst = data.data() + offset;
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                if (dtype == TensorDType::kF64) {
                    const double v = m(r, c);
                    std::memcpy(dst, &v, 8);
                    dst += 8;
                } else {
                    const float v = static_cast<float>(m(r, c));
                    std::memcpy(dst, &v, 4);
                    dst += 4;
                }
            }
        entries.push_back({{"name", t.name},
                           {"dtype", dtype == TensorDType::kF64 ? "f64" : "f32"},
                           {"shape", {m.rows(), m.cols()}},
                           {"offset", offset},
                           {"nbytes", nbytes}});
    }
    nlohmann::json header{{"format_version", kFormatVersion},
                          {"tensors", entries},
                          {"data_sha256", sha256_hex(data)}};
    const std::string header_text = header.dump();
    const std::uint64_t header_len = header_text.size();
    std::string blob(kMagic, 8);
    blob.append(reinterpret_cast<const char*>(&header_len), sizeof header_len);
    blob += header_text;
    blob += data;
    write_file_atomic(path, blob);
}

std::map<std::string, Eigen::MatrixXd> read_tensors(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("weight blob '" + path.string() + "' not found");
    const auto header = read_header(in, path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (sha256_hex(data) != header.json.value("data_sha256", ""))
        throw CheckpointError("weight blob '" + path.string() + "' is corrupted (checksum mismatch)");

    std::map<std::string, Eigen::MatrixXd> out;
    for (const auto& t : header.json.at("tensors")) {
        const auto name = t.at("name").get<std::string>();
        const auto dtype = t.at("dtype").get<std::string>();
        const auto shape = t.at("shape").get<std::vector<std::int64_t>>();
        const auto offset = t.at("offset").get<std::size_t>();
        const auto nbytes = t.at("nbytes").get<std::size_t>();
        const std::size_t width = dtype == "f64" ? 8 : dtype == "f32" ? 4 : 0;
        if (width == 0) throw CheckpointError("'" + path.string() + "': unknown dtype '" + dtype + "'");
        // 1-D tensors are stored as a single column.
        const Eigen::Index rows = shape.empty() ? 1 : shape[0];
        const Eigen::Index cols = shape.size() > 1 ? shape[1] : 1;
        if (static_cast<std::size_t>(rows * cols) * width != nbytes || offset + nbytes > data.size())
            throw CheckpointError("'" + path.string() + "': tensor '" + name + "' has inconsistent extent");
        Eigen::MatrixXd m(rows, cols);
        const char* src = data.data() + offset;
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) {
                if (width == 8) {
                    double v;
                    std::memcpy(&v, src, 8);
                    m(r, c) = v;
                } else {
                    float v;
                    std::memcpy(&v, src, 4);
                    m(r, c) = v;
                }
                src += width;
            }
        out.emplace(name, std::move(m));
    }
    return out;
}

std::string tensor_file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("weight blob '" + path.string() + "' not found");
    return read_header(in, path).json.value("data_sha256", "");
}

} // namespace hsd
