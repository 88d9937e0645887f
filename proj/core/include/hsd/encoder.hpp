#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace hsd {

/// Text -> per-token vectors. Implementations are immutable once built, so
/// one instance can serve concurrent feature extraction.
class Encoder {
public:
    virtual ~Encoder() = default;

    virtual int width() const = 0;
    virtual int max_tokens() const = 0;

    /// Token ids including the leading/trailing special tokens, at most max_tokens() long.
    virtual std::vector<std::int32_t> tokenize(std::string_view text) const = 0;

    /// Last-layer states, one row per token (tokens x width).
    virtual Eigen::MatrixXd token_states(std::span<const std::int32_t> ids) const = 0;

    /// Identifies the weights; equal checksums mean identical outputs.
    virtual std::string checksum() const = 0;

    /// Directory name under the feature cache root ("base", "large", "stub-w16-s7").
    virtual std::string cache_namespace() const = 0;

    Eigen::MatrixXd encode(std::string_view text) const { return token_states(tokenize(text)); }
};

} // namespace hsd
