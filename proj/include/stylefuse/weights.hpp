#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stylefuse/tensor.hpp"

namespace sf {

/// Named tensors holding frozen network parameters.
class WeightStore {
public:
    /// Adds or replaces an entry.
    void insert(const std::string& name, Tensor value);

    bool contains(const std::string& name) const { return entries_.contains(name); }

    /// Throws LoadError naming the entry when absent.
    const Tensor& get(const std::string& name) const;
    /// As get(), and additionally checks the shape.
    const Tensor& get(const std::string& name, const Shape& expected) const;

    const std::map<std::string, Tensor>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

    friend bool operator==(const WeightStore&, const WeightStore&) = default;

private:
    std::map<std::string, Tensor> entries_;
};

// NTWS container
//
//   "NTWS"            4 bytes magic
//   version           u16  (currently 1)
//   entry count       u32
//   per entry:
//     name length     u16
//     name            UTF-8 bytes
//     rank            u8
//     dims            u32 x rank
//     values          f64 x product(dims), row-major
//
// All integers and floats are little-endian. Entries are written in name order.

inline constexpr std::uint16_t kNtwsVersion = 1;

std::vector<std::uint8_t> encode_ntws(const WeightStore& store);
/// Throws IoError (with `origin` as the path) on malformed input.
WeightStore decode_ntws(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");

void save_ntws(const std::filesystem::path& path, const WeightStore& store);
WeightStore load_ntws(const std::filesystem::path& path);

}  // namespace sf
