#include "cml/io.hpp"

#include <fstream>
#include <iterator>

namespace cml::io {

void atomic_write(const std::filesystem::path& path, std::string_view contents)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("io-error", "cannot open " + tmp.string() + " for writing");
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            throw Error("io-error", "write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error("io-error", "cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> contents)
{
    atomic_write(path, std::string_view(reinterpret_cast<const char*>(contents.data()), contents.size()));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("io-error", "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace cml::io
