#include "davss/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace davss {

namespace {

constexpr char kMagic[4] = {'C', 'M', 'T', '1'};

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts are unsupported");

void append_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    buf.push_back(static_cast<std::uint8_t>(v & 0xff));
    buf.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    buf.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    buf.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::vector<std::uint8_t> f32_bytes(const std::vector<double>& values) {
    std::vector<std::uint8_t> bytes(values.size() * 4);
    for (size_t i = 0; i < values.size(); ++i) {
        float f = static_cast<float>(values[i]);
        std::memcpy(bytes.data() + i * 4, &f, 4);
    }
    return bytes;
}

std::vector<double> f32_values(const std::vector<std::uint8_t>& bytes) {
    std::vector<double> values(bytes.size() / 4);
    for (size_t i = 0; i < values.size(); ++i) {
        float f;
        std::memcpy(&f, bytes.data() + i * 4, 4);
        values[i] = f;
    }
    return values;
}

}  // namespace

size_t Tensor::element_count() const {
    size_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return n;
}

void write_tensor(const std::filesystem::path& path, Dtype dtype,
                  const std::vector<std::uint32_t>& dims,
                  const std::vector<std::uint8_t>& payload) {
    if (dims.empty()) throw TensorIoError("write_tensor: dims must be nonempty");
    size_t expect = dtype_size(dtype);
    for (std::uint32_t d : dims) expect *= d;
    if (expect != payload.size()) {
        throw TensorIoError("write_tensor: payload length " + std::to_string(payload.size()) +
                            " does not match dims (" + std::to_string(expect) + " bytes expected)");
    }

    std::vector<std::uint8_t> buf;
    buf.reserve(6 + dims.size() * 4 + payload.size());
    buf.insert(buf.end(), kMagic, kMagic + 4);
    buf.push_back(static_cast<std::uint8_t>(dtype));
    buf.push_back(static_cast<std::uint8_t>(dims.size()));
    for (std::uint32_t d : dims) append_u32(buf, d);
    buf.insert(buf.end(), payload.begin(), payload.end());

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw TensorIoError("write_tensor: cannot open " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw TensorIoError("write_tensor: short write to " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TensorIoError("read_tensor: cannot open " + path.string());

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw TensorIoError("read_tensor: bad magic in " + path.string());
    }

    std::uint8_t dtype_byte = 0, ndim = 0;
    in.read(reinterpret_cast<char*>(&dtype_byte), 1);
    in.read(reinterpret_cast<char*>(&ndim), 1);
    if (!in) throw TensorIoError("read_tensor: truncated header in " + path.string());
    if (dtype_byte > 1) {
        throw TensorIoError("read_tensor: unknown dtype " + std::to_string(dtype_byte));
    }

    Tensor t;
    t.dtype = static_cast<Dtype>(dtype_byte);
    t.dims.resize(ndim);
    for (std::uint8_t i = 0; i < ndim; ++i) {
        std::uint8_t raw[4];
        in.read(reinterpret_cast<char*>(raw), 4);
        if (!in) throw TensorIoError("read_tensor: truncated dims in " + path.string());
        t.dims[i] = static_cast<std::uint32_t>(raw[0]) | (static_cast<std::uint32_t>(raw[1]) << 8) |
                    (static_cast<std::uint32_t>(raw[2]) << 16) | (static_cast<std::uint32_t>(raw[3]) << 24);
    }

    size_t bytes = t.element_count() * dtype_size(t.dtype);
    t.payload.resize(bytes);
    in.read(reinterpret_cast<char*>(t.payload.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<size_t>(in.gcount()) != bytes) {
        throw TensorIoError("read_tensor: truncated payload in " + path.string());
    }
    // Trailing bytes would also mean the file is not a valid tensor.
    char extra;
    in.read(&extra, 1);
    if (in.gcount() != 0) throw TensorIoError("read_tensor: trailing bytes in " + path.string());
    return t;
}

void save_frame(const std::filesystem::path& path, const Frame& f) {
    write_tensor(path, Dtype::F32,
                 {static_cast<std::uint32_t>(f.height), static_cast<std::uint32_t>(f.width),
                  static_cast<std::uint32_t>(f.channels)},
                 f32_bytes(f.data));
}

Frame load_frame(const std::filesystem::path& path) {
    Tensor t = read_tensor(path);
    if (t.dtype != Dtype::F32 || t.dims.size() != 3) throw TensorIoError("load_frame: not an F32 HWC tensor");
    Frame f(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]));
    f.data = f32_values(t.payload);
    return f;
}

void save_label(const std::filesystem::path& path, const LabelMap& l) {
    write_tensor(path, Dtype::U8,
                 {static_cast<std::uint32_t>(l.height), static_cast<std::uint32_t>(l.width)}, l.data);
}

LabelMap load_label(const std::filesystem::path& path, int num_classes) {
    Tensor t = read_tensor(path);
    if (t.dtype != Dtype::U8 || t.dims.size() != 2) throw TensorIoError("load_label: not a U8 HW tensor");
    LabelMap l(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), num_classes);
    l.data = t.payload;
    for (std::uint8_t v : l.data) {
        if (v != kIgnoreLabel && v >= num_classes) {
            throw TensorIoError("load_label: class id out of range in " + path.string());
        }
    }
    return l;
}

void save_flow(const std::filesystem::path& path, const FlowField& f) {
    write_tensor(path, Dtype::F32,
                 {static_cast<std::uint32_t>(f.height), static_cast<std::uint32_t>(f.width), 2u},
                 f32_bytes(f.data));
}

FlowField load_flow(const std::filesystem::path& path) {
    Tensor t = read_tensor(path);
    if (t.dtype != Dtype::F32 || t.dims.size() != 3 || t.dims[2] != 2) {
        throw TensorIoError("load_flow: not an F32 HW2 tensor");
    }
    FlowField f(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]));
    f.data = f32_values(t.payload);
    return f;
}

void save_feature_map(const std::filesystem::path& path, const FeatureMap& f) {
    write_tensor(path, Dtype::F32,
                 {static_cast<std::uint32_t>(f.height), static_cast<std::uint32_t>(f.width),
                  static_cast<std::uint32_t>(f.dim)},
                 f32_bytes(f.data));
}

FeatureMap load_feature_map(const std::filesystem::path& path) {
    Tensor t = read_tensor(path);
    if (t.dtype != Dtype::F32 || t.dims.size() != 3) throw TensorIoError("load_feature_map: not an F32 HWD tensor");
    FeatureMap f(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]));
    f.data = f32_values(t.payload);
    return f;
}

void save_f32(const std::filesystem::path& path, const std::vector<std::uint32_t>& dims,
              const std::vector<double>& values) {
    write_tensor(path, Dtype::F32, dims, f32_bytes(values));
}

std::pair<std::vector<std::uint32_t>, std::vector<double>> load_f32(const std::filesystem::path& path) {
    Tensor t = read_tensor(path);
    if (t.dtype != Dtype::F32) throw TensorIoError("load_f32: not an F32 tensor");
    return {t.dims, f32_values(t.payload)};
}

}  // namespace davss
