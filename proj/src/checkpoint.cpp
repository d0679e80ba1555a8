// Binary checkpoint: all integers and doubles little-endian.
//
//   "GPCK" | u32 version
//   u32 n_scales | n_scales × (i32 blocks, u64 width)
//   i32 k | u64 input_dim | u64 num_classes | i32 variant | f64 init_scale | f64 bn_epsilon
//   u64 n_tensors | n_tensors × (u32 name_len, name, u64 rows, u64 cols, rows*cols × f64)

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "gradprop/data.hpp"
#include "gradprop/resnet.hpp"

namespace gradprop {

namespace {

constexpr std::array<char, 4> kMagic{'G', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}

    template <class UInt>
    void uint(UInt v) {
        std::array<char, sizeof(UInt)> bytes{};
        for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        os_.write(bytes.data(), bytes.size());
    }
    void i32(std::int32_t v) { uint(static_cast<std::uint32_t>(v)); }
    void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
    void raw(const char* p, std::size_t n) { os_.write(p, static_cast<std::streamsize>(n)); }

private:
    std::ostream& os_;
};

class Reader {
public:
    explicit Reader(std::istream& is) : is_(is) {}

    template <class UInt>
    UInt uint() {
        std::array<unsigned char, sizeof(UInt)> bytes{};
        is_.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
        if (!is_) throw DataFormatError("checkpoint: unexpected end of file");
        UInt v = 0;
        for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes[i]) << (8 * i);
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(uint<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
    std::string str(std::size_t n) {
        std::string s(n, '\0');
        is_.read(s.data(), static_cast<std::streamsize>(n));
        if (!is_) throw DataFormatError("checkpoint: unexpected end of file");
        return s;
    }

private:
    std::istream& is_;
};

}  // namespace

void save_checkpoint(const Model& m, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataFormatError("checkpoint: cannot open " + path.string() + " for writing");
    Writer w(os);
    w.raw(kMagic.data(), kMagic.size());
    w.uint<std::uint32_t>(kVersion);

    const NetSpec& s = m.spec;
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(s.scales.size()));
    for (const auto& sc : s.scales) {
        w.i32(sc.blocks);
        w.uint<std::uint64_t>(sc.width);
    }
    w.i32(s.growth_k);
    w.uint<std::uint64_t>(s.input_dim);
    w.uint<std::uint64_t>(s.num_classes);
    w.i32(static_cast<std::int32_t>(s.variant));
    w.f64(s.init_scale);
    w.f64(s.bn_epsilon);

    std::uint64_t count = 0;
    for_each_tensor(m, [&](const std::string&, TensorShape, std::span<const double>) { ++count; });
    w.uint<std::uint64_t>(count);
    for_each_tensor(m, [&](const std::string& name, TensorShape shape, std::span<const double> data) {
        w.uint<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.raw(name.data(), name.size());
        w.uint<std::uint64_t>(shape.rows);
        w.uint<std::uint64_t>(shape.cols);
        for (double v : data) w.f64(v);
    });
    if (!os) throw DataFormatError("checkpoint: write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataFormatError("checkpoint: cannot open " + path.string());
    Reader r(is);
    if (r.str(kMagic.size()) != std::string(kMagic.data(), kMagic.size()))
        throw DataFormatError("checkpoint: bad magic in " + path.string());
    if (const auto version = r.uint<std::uint32_t>(); version != kVersion)
        throw DataFormatError("checkpoint: unsupported version " + std::to_string(version));

    NetSpec s;
    const auto n_scales = r.uint<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_scales; ++i) {
        ScaleSpec sc;
        sc.blocks = r.i32();
        sc.width = r.uint<std::uint64_t>();
        s.scales.push_back(sc);
    }
    s.growth_k = r.i32();
    s.input_dim = r.uint<std::uint64_t>();
    s.num_classes = r.uint<std::uint64_t>();
    const auto variant = r.i32();
    if (variant < 1 || variant > 3) throw DataFormatError("checkpoint: invalid variant");
    s.variant = static_cast<Variant>(variant);
    s.init_scale = r.f64();
    s.bn_epsilon = r.f64();

    // Build the skeleton, then overwrite every tensor in visit order.
    SeededRng skeleton_rng(0);
    Model m = build_network(s, skeleton_rng);
    std::uint64_t expected = 0;
    for_each_tensor(m, [&](const std::string&, TensorShape, std::span<double>) { ++expected; });
    if (r.uint<std::uint64_t>() != expected) throw DataFormatError("checkpoint: tensor count mismatch");

    for_each_tensor(m, [&](const std::string& name, TensorShape shape, std::span<double> data) {
        const auto len = r.uint<std::uint32_t>();
        if (r.str(len) != name) throw DataFormatError("checkpoint: expected tensor " + name);
        const auto rows = r.uint<std::uint64_t>();
        const auto cols = r.uint<std::uint64_t>();
        if (rows != shape.rows || cols != shape.cols) throw DataFormatError("checkpoint: shape mismatch for " + name);
        for (double& v : data) v = r.f64();
    });
    return m;
}

}  // namespace gradprop
