#include "stylefuse/weights.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "stylefuse/errors.hpp"

namespace sf {

void WeightStore::insert(const std::string& name, Tensor value) { entries_[name] = std::move(value); }

const Tensor& WeightStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw LoadError("weight store has no entry '" + name + "'");
    return it->second;
}

const Tensor& WeightStore::get(const std::string& name, const Shape& expected) const {
    const Tensor& t = get(name);
    if (t.shape() != expected) {
        throw LoadError("weight entry '" + name + "' has shape " + shape_str(t.shape()) + ", expected " +
                        shape_str(expected));
    }
    return t;
}

namespace {

constexpr char kMagic[4] = {'N', 'T', 'W', 'S'};

class Writer {
public:
    template <typename T>
    void put(T v) {
        auto bits = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
        if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
        out_.insert(out_.end(), bits.begin(), bits.end());
    }
    void put_bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    Reader(std::span<const std::uint8_t> bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        std::array<std::uint8_t, sizeof(T)> bits;
        std::memcpy(bits.data(), bytes_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
        pos_ += sizeof(T);
        return std::bit_cast<T>(bits);
    }
    std::string get_string(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw IoError(origin_, "truncated NTWS data at byte " + std::to_string(pos_));
    }
    bool done() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_ntws(const WeightStore& store) {
    Writer w;
    w.put_bytes(kMagic, 4);
    w.put<std::uint16_t>(kNtwsVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(store.size()));
    for (const auto& [name, t] : store.entries()) {
        if (name.size() > 0xFFFF) throw ContractError("NTWS entry name too long: " + name.substr(0, 32) + "...");
        if (t.rank() > 0xFF) throw ContractError("NTWS entry '" + name + "' has too many dimensions");
        w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
        w.put_bytes(name.data(), name.size());
        w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.shape()) {
            if (d > 0xFFFFFFFFu) throw ContractError("NTWS entry '" + name + "' dimension exceeds u32");
            w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
        }
        for (double v : t.data()) w.put<double>(v);
    }
    return w.take();
}

WeightStore decode_ntws(std::span<const std::uint8_t> bytes, const std::string& origin) {
    Reader r(bytes, origin);
    if (r.get_string(4) != std::string(kMagic, 4)) throw IoError(origin, "not an NTWS container (bad magic)");
    const auto version = r.get<std::uint16_t>();
    if (version != kNtwsVersion) throw IoError(origin, "unsupported NTWS version " + std::to_string(version));
    const auto count = r.get<std::uint32_t>();
    WeightStore store;
    for (std::uint32_t e = 0; e < count; ++e) {
        const auto name_len = r.get<std::uint16_t>();
        std::string name = r.get_string(name_len);
        const auto rank = r.get<std::uint8_t>();
        if (rank == 0) throw IoError(origin, "entry '" + name + "' has rank 0");
        Shape shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            d = r.get<std::uint32_t>();
            if (d == 0) throw IoError(origin, "entry '" + name + "' has a zero dimension");
            n *= d;
        }
        r.need(n * sizeof(double));
        std::vector<double> data(n);
        for (auto& v : data) v = r.get<double>();
        if (store.contains(name)) throw IoError(origin, "duplicate entry '" + name + "'");
        store.insert(name, Tensor(std::move(shape), std::move(data)));
    }
    if (!r.done()) throw IoError(origin, "trailing bytes after " + std::to_string(count) + " entries");
    return store;
}

void save_ntws(const std::filesystem::path& path, const WeightStore& store) {
    const auto bytes = encode_ntws(store);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string(), "cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(path.string(), "write failed");
}

WeightStore load_ntws(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string(), "cannot open for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_ntws(bytes, path.string());
}

}  // namespace sf
