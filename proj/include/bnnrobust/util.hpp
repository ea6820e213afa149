#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace bnnrobust {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// fnv1a rendered as 16 lowercase hex digits.
std::string hash_hex(std::string_view bytes);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Keeps large freed blocks in the heap instead of returning them to the OS.
/// Training allocates the same multi-megabyte temporaries on every gradient;
/// with default glibc settings each one is a fresh mmap and a round of page
/// faults. No-op on other C libraries.
void retain_large_allocations();

}  // namespace bnnrobust
