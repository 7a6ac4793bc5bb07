#include "advlab/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

namespace advlab {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'V', 'L'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::ofstream& f, T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        f.write(bytes.data(), sizeof(T));
    } else {
        f.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
}

template <typename T>
T get(std::ifstream& f) {
    T v;
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw std::runtime_error("checkpoint: truncated file");
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        v = std::bit_cast<T>(bytes);
    }
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamMap& tensors) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    f.write(kMagic, 4);
    put<std::uint32_t>(f, kVersion);
    put<std::uint32_t>(f, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw std::invalid_argument("checkpoint: tensor name too long: " + name);
        }
        put<std::uint16_t>(f, static_cast<std::uint16_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint8_t>(f, static_cast<std::uint8_t>(t.rank()));
        for (std::size_t i = 0; i < t.rank(); ++i) put<std::uint32_t>(f, static_cast<std::uint32_t>(t.dim(i)));
        for (std::size_t i = 0; i < t.numel(); ++i) put<double>(f, t[i]);
    }
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

ParamMap load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path);
    }
    auto version = get<std::uint32_t>(f);
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    auto count = get<std::uint32_t>(f);
    ParamMap out;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto name_len = get<std::uint16_t>(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        if (!f) throw std::runtime_error("checkpoint: truncated name");
        auto rank = get<std::uint8_t>(f);
        Shape shape(rank);
        for (std::uint8_t r = 0; r < rank; ++r) shape[r] = get<std::uint32_t>(f);
        Tensor t(shape);
        for (std::size_t j = 0; j < t.numel(); ++j) t[j] = get<double>(f);
        if (!out.emplace(std::move(name), std::move(t)).second) {
            throw std::runtime_error("checkpoint: duplicate tensor name in " + path);
        }
    }
    return out;
}

}  // namespace advlab
