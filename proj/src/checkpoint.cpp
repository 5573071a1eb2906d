#include "mvprof/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mvprof {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'F', '1'};

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(char(v & 0xFF));
    out.push_back(char((v >> 8) & 0xFF));
    out.push_back(char((v >> 16) & 0xFF));
    out.push_back(char((v >> 24) & 0xFF));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i)
        out.push_back(char((bits >> (8 * i)) & 0xFF));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > buf.size())
            throw FormatError("checkpoint: truncated while reading " +
                              std::string(what) + " at offset " +
                              std::to_string(pos));
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= std::uint32_t(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= std::uint64_t(static_cast<unsigned char>(buf[pos + i]))
                    << (8 * i);
        pos += 8;
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace

const Tensor* LoadedCheckpoint::find(const std::string& name) const {
    for (const NamedTensor& e : entries)
        if (e.name == name)
            return &e.tensor;
    return nullptr;
}

void save_checkpoint(const std::string& path, const nlohmann::json& config,
                     const ParamList& params) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    const std::string cfg = config.dump();
    put_u32(out, std::uint32_t(cfg.size()));
    out += cfg;
    put_u32(out, std::uint32_t(params.size()));
    for (const Param& p : params) {
        put_u32(out, std::uint32_t(p.name.size()));
        out += p.name;
        const Shape& shape = p.tensor->shape();
        put_u32(out, std::uint32_t(shape.size()));
        for (int d : shape)
            put_u32(out, std::uint32_t(d));
        const double* data = p.tensor->data();
        for (int i = 0; i < p.tensor->size(); ++i)
            put_f64(out, data[i]);
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file)
        throw FormatError("checkpoint: cannot open '" + path + "' for writing");
    file.write(out.data(), std::streamsize(out.size()));
    if (!file)
        throw FormatError("checkpoint: short write to '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file)
        throw FormatError("checkpoint: cannot open '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(file)),
                    std::istreambuf_iterator<char>());
    Reader r{buf};

    const std::string magic = r.bytes(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw FormatError("checkpoint: bad magic at offset 0");
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version " +
                          std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");

    LoadedCheckpoint ckpt;
    const std::uint32_t cfg_len = r.u32("config length");
    const std::string cfg = r.bytes(cfg_len, "config json");
    try {
        ckpt.config = nlohmann::json::parse(cfg);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: config json is invalid: ") +
                          e.what());
    }

    const std::uint32_t count = r.u32("entry count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32("name length");
        NamedTensor entry;
        entry.name = r.bytes(name_len, "name");
        const std::uint32_t rank = r.u32("rank");
        if (rank > 8)
            throw FormatError("checkpoint: implausible rank " +
                              std::to_string(rank) + " for '" + entry.name +
                              "' at offset " + std::to_string(r.pos - 4));
        Shape shape;
        long long total = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t extent = r.u32("dim");
            if (extent == 0 || extent > (1u << 28))
                throw FormatError("checkpoint: bad extent " +
                                  std::to_string(extent) + " for '" +
                                  entry.name + "'");
            shape.push_back(int(extent));
            total *= extent;
        }
        std::vector<double> data(static_cast<std::size_t>(total));
        for (long long j = 0; j < total; ++j)
            data[std::size_t(j)] = r.f64("tensor data");
        entry.tensor = Tensor(shape, std::move(data));
        ckpt.entries.push_back(std::move(entry));
    }
    if (r.pos != buf.size())
        throw FormatError("checkpoint: " +
                          std::to_string(buf.size() - r.pos) +
                          " trailing bytes at offset " + std::to_string(r.pos));
    return ckpt;
}

void restore_params(const LoadedCheckpoint& ckpt, const ParamList& params) {
    for (const Param& p : params) {
        const Tensor* saved = ckpt.find(p.name);
        if (!saved)
            throw FormatError("checkpoint: missing parameter '" + p.name + "'");
        if (saved->shape() != p.tensor->shape())
            throw FormatError("checkpoint: shape mismatch for '" + p.name +
                              "': saved " + shape_str(saved->shape()) +
                              " vs model " + shape_str(p.tensor->shape()));
        std::copy_n(saved->data(), std::size_t(saved->size()),
                    p.tensor->data());
    }
}

} // namespace mvprof
