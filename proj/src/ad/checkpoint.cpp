#include "pman/ad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pman/error.hpp"

namespace pman::ad {
namespace {

constexpr char kMagic[4] = {'P', 'M', 'A', 'N'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    float f32(const char* what) {
        const std::uint32_t bits = u32(what);
        return std::bit_cast<float>(bits);
    }

    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }

    [[noreturn]] void fail(const std::string& msg) const {
        throw FormatError("checkpoint: " + msg + " at byte offset " + std::to_string(pos_));
    }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) fail(std::string("truncated while reading ") + what);
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const TensorMap& tensors) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

TensorMap decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    if (r.str(4, "magic") != std::string(kMagic, 4)) {
        throw FormatError("checkpoint: bad magic at byte offset 0");
    }
    const std::size_t version_at = r.pos();
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version) +
                          " at byte offset " + std::to_string(version_at));
    }
    const std::uint32_t count = r.u32("tensor count");
    TensorMap out;
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint32_t len = r.u32("name length");
        std::string name = r.str(len, "name");
        const std::uint32_t ndim = r.u32("ndim");
        if (ndim > 8) r.fail("implausible rank " + std::to_string(ndim));
        Shape shape;
        for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(r.u32("dims"));
        const std::size_t n = shape_numel(shape);
        if (n > (bytes.size() - r.pos()) / 4) r.fail("truncated tensor '" + name + "'");
        std::vector<float> values(n);
        for (std::size_t i = 0; i < n; ++i) values[i] = r.f32("values");
        if (out.count(name)) r.fail("duplicate tensor '" + name + "'");
        out.emplace(std::move(name), Tensor<float>(std::move(shape), std::move(values)));
    }
    if (!r.done()) r.fail("trailing bytes");
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors) {
    const auto bytes = encode_checkpoint(tensors);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot write checkpoint " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ValidationError("failed writing checkpoint " + path.string());
}

TensorMap load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot read checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

TensorMap to_tensor_map(const ParameterStore<float>& store, const std::string& prefix) {
    TensorMap out;
    for (const auto& [name, t] : store.params()) {
        Tensor<float> copy(t.shape(), t.values());
        out.emplace(prefix + "param:" + name, std::move(copy));
    }
    for (const auto& [name, t] : store.buffers()) {
        Tensor<float> copy(t.shape(), t.values());
        out.emplace(prefix + "buffer:" + name, std::move(copy));
    }
    return out;
}

void load_into(ParameterStore<float>& store, const TensorMap& tensors, const std::string& prefix) {
    auto take = [&](const std::string& key, Tensor<float>& dst) {
        auto it = tensors.find(key);
        if (it == tensors.end()) throw FormatError("checkpoint: missing tensor '" + key + "'");
        if (it->second.shape() != dst.shape()) {
            throw FormatError("checkpoint: tensor '" + key + "' has shape " +
                              shape_str(it->second.shape()) + ", model expects " +
                              shape_str(dst.shape()));
        }
        dst.values() = it->second.values();
    };
    for (auto& [name, t] : store.params()) take(prefix + "param:" + name, t);
    for (auto& [name, t] : store.buffers()) take(prefix + "buffer:" + name, t);
}

}  // namespace pman::ad
