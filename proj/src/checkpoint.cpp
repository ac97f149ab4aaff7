#include "mmf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include <zlib.h>

#include "mmf/error.hpp"
#include "mmf/textfmt.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace mmf {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'F', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_u64(std::string& buf, std::uint64_t v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
public:
    Reader(const std::string& data, std::string path)
        : data_(data), path_(std::move(path)) {}

    void raw(void* out, std::size_t n) {
        require(pos_ + n <= data_.size(), ErrorCode::format,
                path_ + ": truncated checkpoint");
        std::memcpy(out, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, sizeof v);
        return v;
    }
    std::string bytes(std::size_t n) {
        require(pos_ + n <= data_.size(), ErrorCode::format,
                path_ + ": truncated checkpoint");
        std::string out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    bool exhausted() const { return pos_ == data_.size(); }

private:
    const std::string& data_;
    std::string path_;
    std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::string& data) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(data.data()),
                static_cast<uInt>(data.size())));
}

}  // namespace

void Checkpoint::set_f64(const std::string& key, double v) { config[key] = format_double(v); }

void Checkpoint::set_u64(const std::string& key, std::uint64_t v) {
    config[key] = std::to_string(v);
}

double Checkpoint::get_f64(const std::string& key) const {
    auto it = config.find(key);
    require(it != config.end(), ErrorCode::format, "checkpoint missing config key " + key);
    return std::strtod(it->second.c_str(), nullptr);
}

std::uint64_t Checkpoint::get_u64(const std::string& key) const {
    auto it = config.find(key);
    require(it != config.end(), ErrorCode::format, "checkpoint missing config key " + key);
    return std::strtoull(it->second.c_str(), nullptr, 10);
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::string buf;
    buf.append(kMagic, sizeof kMagic);
    put_u32(buf, ckpt.version);

    std::string cfg;
    for (const auto& [key, value] : ckpt.config) {
        require(key.find('=') == std::string::npos && key.find('\n') == std::string::npos,
                ErrorCode::invalid_argument, "bad config key: " + key);
        require(value.find('\n') == std::string::npos, ErrorCode::invalid_argument,
                "bad config value for " + key);
        cfg += key + "=" + value + "\n";
    }
    put_u64(buf, cfg.size());
    buf += cfg;

    put_u64(buf, ckpt.tensors.size());
    for (const auto& [name, tensor] : ckpt.tensors) {
        put_u64(buf, name.size());
        buf += name;
        put_u64(buf, tensor.rank());
        for (std::size_t d = 0; d < tensor.rank(); ++d) put_u64(buf, tensor.dim(d));
        buf.append(reinterpret_cast<const char*>(tensor.data()),
                   tensor.numel() * sizeof(double));
    }
    put_u32(buf, crc_of(buf));

    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::io, "cannot write " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    require(out.good(), ErrorCode::io, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io, "cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    require(data.size() >= sizeof kMagic + sizeof(std::uint32_t) * 2, ErrorCode::format,
            path + ": file too short for a checkpoint");

    const std::string body = data.substr(0, data.size() - 4);
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, data.data() + data.size() - 4, 4);
    require(stored_crc == crc_of(body), ErrorCode::format, path + ": checksum mismatch");

    Reader r(body, path);
    char magic[4];
    r.raw(magic, sizeof magic);
    require(std::memcmp(magic, kMagic, sizeof kMagic) == 0, ErrorCode::format,
            path + ": not a checkpoint file (bad magic)");
    Checkpoint ckpt;
    ckpt.version = r.u32();
    require(ckpt.version == kVersion, ErrorCode::format,
            path + ": unsupported checkpoint version " + std::to_string(ckpt.version));

    const std::uint64_t cfg_len = r.u64();
    std::string cfg = r.bytes(cfg_len);
    std::size_t pos = 0;
    while (pos < cfg.size()) {
        std::size_t nl = cfg.find('\n', pos);
        require(nl != std::string::npos, ErrorCode::format, path + ": bad config block");
        std::string entry = cfg.substr(pos, nl - pos);
        pos = nl + 1;
        std::size_t eq = entry.find('=');
        require(eq != std::string::npos, ErrorCode::format,
                path + ": bad config entry " + entry);
        ckpt.config[entry.substr(0, eq)] = entry.substr(eq + 1);
    }

    const std::uint64_t count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint64_t name_len = r.u64();
        std::string name = r.bytes(name_len);
        const std::uint64_t rank = r.u64();
        require(rank <= 8, ErrorCode::format, path + ": implausible tensor rank");
        std::vector<std::size_t> dims(rank);
        std::size_t numel = 1;
        for (auto& d : dims) {
            d = static_cast<std::size_t>(r.u64());
            numel *= d;
        }
        Tensor t(dims);
        r.raw(t.data(), numel * sizeof(double));
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    require(r.exhausted(), ErrorCode::format, path + ": trailing bytes after tensor records");
    return ckpt;
}

Checkpoint checkpoint_from_params(const ModelParams& params, double norm_mean,
                                  double norm_std) {
    Checkpoint ckpt;
    ckpt.set_u64("model.exml_layers", params.dims.exml_layers);
    ckpt.set_u64("model.channels", params.dims.channels);
    ckpt.set_u64("model.ff_hidden", params.dims.ff_hidden);
    ckpt.set_u64("model.ff_weight_layers", params.dims.ff_weight_layers);
    ckpt.set_u64("model.factors", params.dims.factors);
    ckpt.set_f64("data.norm_mean", norm_mean);
    ckpt.set_f64("data.norm_std", norm_std);
    for (const auto& [name, value] : params.named_parameters()) {
        ckpt.tensors.emplace_back(name, value->value);
    }
    return ckpt;
}

ModelParams params_from_checkpoint(const Checkpoint& ckpt) {
    ModelDims dims;
    dims.exml_layers = static_cast<std::size_t>(ckpt.get_u64("model.exml_layers"));
    dims.channels = static_cast<std::size_t>(ckpt.get_u64("model.channels"));
    dims.ff_hidden = static_cast<std::size_t>(ckpt.get_u64("model.ff_hidden"));
    dims.ff_weight_layers = static_cast<std::size_t>(ckpt.get_u64("model.ff_weight_layers"));
    dims.factors = static_cast<std::size_t>(ckpt.get_u64("model.factors"));

    RngStream rng(0);
    ModelParams params = make_model_params(dims, rng);
    auto named = params.named_parameters();
    std::unordered_map<std::string, grad::Value> by_name;
    for (auto& [name, value] : named) by_name[name] = value;

    std::size_t filled = 0;
    for (const auto& [name, tensor] : ckpt.tensors) {
        auto it = by_name.find(name);
        require(it != by_name.end(), ErrorCode::format,
                "checkpoint holds unknown parameter " + name);
        require(it->second->value.same_shape(tensor), ErrorCode::format,
                "checkpoint parameter " + name + " has shape " + shape_string(tensor) +
                    ", expected " + shape_string(it->second->value));
        it->second->value = tensor;
        ++filled;
    }
    require(filled == named.size(), ErrorCode::format,
            "checkpoint is missing " + std::to_string(named.size() - filled) +
                " parameter tensors");
    return params;
}

}  // namespace mmf
