#include "mmrl/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mmrl/errors.hpp"

namespace mmrl {

namespace {

constexpr std::uint32_t kTensorVersion = 1;
constexpr std::uint32_t kBundleVersion = 1;
constexpr char kTensorMagic[4] = {'M', 'M', 'T', 'F'};
constexpr char kBundleMagic[4] = {'M', 'M', 'D', 'L'};

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void put_f64(std::string& out, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

// Reader that tracks its absolute offset so truncation errors can name the
// byte where the file ran out.
class Cursor {
public:
    Cursor(std::istream& in, std::size_t base) : in_(&in), offset_(base) {}

    void read(void* dst, std::size_t n, const char* what) {
        in_->read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_->gcount()) != n) {
            throw IoError(std::string("truncated file: expected ") + what + " at byte offset " +
                          std::to_string(offset_));
        }
        offset_ += n;
    }

    std::uint32_t read_u32(const char* what) {
        std::uint8_t b[4];
        read(b, 4, what);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    double read_f64(const char* what) {
        std::uint8_t b[8];
        read(b, 8, what);
        std::uint64_t bits = 0;
        for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
        return std::bit_cast<double>(bits);
    }

    std::size_t offset() const { return offset_; }
    void skip_to(std::size_t offset) { offset_ = offset; }

private:
    std::istream* in_;
    std::size_t offset_;
};

std::string tensor_bytes(const Tensor& t) {
    std::string out;
    out.append(kTensorMagic, 4);
    put_u32(out, kTensorVersion);
    put_u32(out, static_cast<std::uint32_t>(t.ndim()));
    for (std::size_t e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    const std::size_t payload_start = out.size();
    for (double v : t.values()) put_f64(out, v);
    const std::uint32_t crc =
        crc32(reinterpret_cast<const std::uint8_t*>(out.data() + payload_start), out.size() - payload_start);
    put_u32(out, crc);
    return out;
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t seed) {
    static const std::array<std::uint32_t, 256> table = make_crc_table();
    std::uint32_t c = seed ^ 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

void write_tensor(std::ostream& out, const Tensor& t) {
    const std::string bytes = tensor_bytes(t);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing tensor stream");
}

Tensor read_tensor(std::istream& in, std::size_t stream_base_offset) {
    Cursor cur(in, stream_base_offset);
    char magic[4];
    cur.read(magic, 4, "magic");
    if (std::memcmp(magic, kTensorMagic, 4) != 0) {
        throw IoError("malformed tensor header: bad magic (expected MMTF)");
    }
    const std::uint32_t version = cur.read_u32("version");
    if (version != kTensorVersion) {
        throw IoError("unsupported tensor format version " + std::to_string(version));
    }
    const std::uint32_t ndim = cur.read_u32("ndim");
    if (ndim > 8) throw IoError("malformed tensor header: ndim " + std::to_string(ndim) + " out of range");
    std::vector<std::size_t> shape(ndim);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        shape[i] = cur.read_u32("extent");
        if (shape[i] == 0) throw IoError("malformed tensor header: zero extent");
        count *= shape[i];
    }
    std::vector<double> data(count);
    std::string payload;
    payload.resize(count * 8);
    cur.read(payload.data(), payload.size(), "payload");
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b)
            bits = (bits << 8) | static_cast<std::uint8_t>(payload[i * 8 + static_cast<std::size_t>(b)]);
        data[i] = std::bit_cast<double>(bits);
    }
    const std::uint32_t stored = cur.read_u32("checksum");
    const std::uint32_t actual = crc32(reinterpret_cast<const std::uint8_t*>(payload.data()), payload.size());
    if (stored != actual) throw IoError("tensor payload checksum mismatch");
    return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_tensor(out, t);
    out.close();
    if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_tensor(in, 0);
}

const Tensor& ModelBundle::param(const std::string& name) const {
    for (const auto& [n, t] : params) {
        if (n == name) return t;
    }
    throw IoError("model bundle is missing parameter '" + name + "'");
}

std::string bundle_kind(const ModelBundle& bundle) {
    const auto j = nlohmann::json::parse(bundle.architecture, nullptr, false);
    if (j.is_discarded() || !j.contains("kind") || !j["kind"].is_string()) {
        throw IoError("model bundle has no architecture kind");
    }
    return j["kind"].get<std::string>();
}

void save_model(const std::filesystem::path& path, const ModelBundle& bundle) {
    std::string body;
    body.append(kBundleMagic, 4);
    put_u32(body, kBundleVersion);
    put_u32(body, static_cast<std::uint32_t>(bundle.architecture.size()));
    body.append(bundle.architecture);
    for (const auto& [name, tensor] : bundle.params) {
        put_u32(body, static_cast<std::uint32_t>(name.size()));
        body.append(name);
        body.append(tensor_bytes(tensor));
    }
    put_u32(body, crc32(reinterpret_cast<const std::uint8_t*>(body.data()), body.size()));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    out.close();
    if (!out) throw IoError("failed writing " + path.string());
}

ModelBundle load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string body = buf.str();
    if (body.size() < 12) throw IoError("truncated model bundle " + path.string());
    if (std::memcmp(body.data(), kBundleMagic, 4) != 0) {
        throw IoError("malformed model bundle: bad magic (expected MMDL)");
    }
    const std::string inner = body.substr(0, body.size() - 4);
    std::istringstream stream(inner);
    stream.ignore(4);
    Cursor cur(stream, 4);
    const std::uint32_t version = cur.read_u32("version");
    if (version != kBundleVersion) {
        throw IoError("unsupported model bundle version " + std::to_string(version));
    }

    std::uint32_t stored = 0;
    std::memcpy(&stored, body.data() + body.size() - 4, 4);
    if constexpr (std::endian::native == std::endian::big) {
        stored = __builtin_bswap32(stored);
    }
    const std::uint32_t actual = crc32(reinterpret_cast<const std::uint8_t*>(inner.data()), inner.size());
    if (stored != actual) throw IoError("model bundle checksum mismatch in " + path.string());

    ModelBundle bundle;
    const std::uint32_t arch_len = cur.read_u32("descriptor length");
    bundle.architecture.resize(arch_len);
    cur.read(bundle.architecture.data(), arch_len, "descriptor");
    while (cur.offset() < inner.size()) {
        const std::uint32_t name_len = cur.read_u32("parameter name length");
        std::string name(name_len, '\0');
        cur.read(name.data(), name_len, "parameter name");
        Tensor t = read_tensor(stream, cur.offset());
        bundle.params.emplace_back(std::move(name), std::move(t));
        cur.skip_to(static_cast<std::size_t>(stream.tellg()));
    }
    return bundle;
}

}  // namespace mmrl
