// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstring>
#include <span>
#include <vector>

#include "asopt/bytes.hpp"
#include "asopt/densela.hpp"
#include "asopt/errors.hpp"

namespace asopt {

inline std::vector<std::byte> matrix_bytes(const Matd& m) {
    std::vector<std::byte> out(static_cast<size_t>(m.size()) * sizeof(double));
    if (!out.empty()) std::memcpy(out.data(), m.data(), out.size());
    return out;
}

inline void matrix_from_bytes(std::span<const std::byte> bytes, Matd& out) {
    if (bytes.size() != static_cast<size_t>(out.size()) * sizeof(double))
        throw ShapeMismatchError("matrix_from_bytes: size mismatch");
    if (!bytes.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
}

inline std::uint64_t matrix_checksum(const Matd& m) {
    auto b = matrix_bytes(m);
    return fnv1a64(std::span<const std::byte>(b.data(), b.size()));
}

}  // namespace asopt
