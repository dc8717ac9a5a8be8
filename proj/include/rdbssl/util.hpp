#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace rdbssl {

// Mixes a base seed with tags into an independent stream seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

// Lower-case hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

}  // namespace rdbssl
