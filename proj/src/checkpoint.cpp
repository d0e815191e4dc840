#include "latst/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace latst {

namespace {

constexpr char kMagic[6] = {'L', 'A', 'T', 'S', 'T', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 8);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in) throw CheckpointError("checkpoint truncated while reading u32");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[i];
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw CheckpointError("checkpoint truncated while reading u64");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
    return v;
}

double get_f64(std::istream& in) {
    std::uint64_t bits = get_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint file '" + path + "'");
    out.write(kMagic, sizeof(kMagic));
    put_u64(out, checkpoint.tensors.size());
    for (const auto& [name, tensor] : checkpoint.tensors) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d : tensor.shape()) put_u64(out, d);
        for (double v : tensor.data()) put_f64(out, v);
    }
    put_u64(out, checkpoint.config_text.size());
    out.write(checkpoint.config_text.data(),
              static_cast<std::streamsize>(checkpoint.config_text.size()));
    if (!out) throw CheckpointError("write failed for checkpoint file '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint file '" + path + "'");
    char magic[6];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw CheckpointError("'" + path + "' is not a LATST1 checkpoint (bad magic)");
    }
    Checkpoint checkpoint;
    const std::uint64_t count = get_u64(in);
    for (std::uint64_t t = 0; t < count; ++t) {
        const std::uint32_t name_len = get_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw CheckpointError("checkpoint truncated in tensor name");
        const std::uint32_t rank = get_u32(in);
        Shape shape(rank);
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<std::size_t>(get_u64(in));
            numel *= shape[d];
        }
        std::vector<double> data(numel);
        for (std::size_t i = 0; i < numel; ++i) data[i] = get_f64(in);
        checkpoint.tensors.emplace_back(std::move(name),
                                        Tensor::from_data(std::move(shape), std::move(data)));
    }
    const std::uint64_t text_len = get_u64(in);
    checkpoint.config_text.resize(text_len);
    in.read(checkpoint.config_text.data(), static_cast<std::streamsize>(text_len));
    if (!in) throw CheckpointError("checkpoint truncated in config block");
    return checkpoint;
}

}  // namespace latst
