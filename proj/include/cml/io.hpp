#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "cml/error.hpp"

namespace cml::io {

// Little-endian hosts only; every supported target is.
static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
public:
    template <typename T>
        requires std::is_trivially_copyable_v<T>
    void put(const T& v)
    {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }

    void put_bytes(const void* data, std::size_t n)
    {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes_.insert(bytes_.end(), p, p + n);
    }

    void put_string(std::string_view s)
    {
        put(static_cast<std::uint32_t>(s.size()));
        put_bytes(s.data(), s.size());
    }

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) { }

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    T get()
    {
        T v;
        get_bytes(&v, sizeof(T));
        return v;
    }

    void get_bytes(void* out, std::size_t n)
    {
        if (n > bytes_.size() - pos_) {
            throw Error("corrupt-data", "truncated input at byte " + std::to_string(pos_));
        }
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }

    std::string get_string()
    {
        const auto n = get<std::uint32_t>();
        std::string s(n, '\0');
        get_bytes(s.data(), n);
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }
    std::size_t position() const { return pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

/// Writes to a sibling temp file, then renames over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view contents);
void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> contents);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

} // namespace cml::io
