#include "hanmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace hanmt {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'H', 'A', 'N', 'M', 'T', 'C', 'K', 'P'};
constexpr char kTrailer[8] = {'H', 'A', 'N', 'M', 'T', 'E', 'N', 'D'};

class Writer {
   public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void shape(const Shape& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        for (std::size_t d : s) u64(d);
    }
    void floats(const Tensor& t) {
        for (double v : t.data()) {
            const float f = static_cast<float>(v);
            bytes(&f, 4);
        }
    }
    std::string take() { return std::move(out_); }

   private:
    std::string out_;
};

class Reader {
   public:
    explicit Reader(const std::string& in) : in_(in) {}
    void bytes(void* p, std::size_t n) {
        if (n > in_.size() - pos_) throw CheckpointError("checkpoint is truncated");
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        if (n > in_.size() - pos_) throw CheckpointError("checkpoint is truncated");
        std::string s(in_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    Shape shape() {
        const std::uint32_t rank = u32();
        if (rank > 8) throw CheckpointError(fmt::format("implausible tensor rank {}", rank));
        Shape s(rank);
        for (auto& d : s) d = u64();
        return s;
    }
    Tensor floats(Shape shape) {
        const std::size_t n = shape_numel(shape);
        if (n > (in_.size() - pos_) / 4) throw CheckpointError("checkpoint is truncated");
        std::vector<double> data(n);
        for (auto& v : data) {
            float f;
            bytes(&f, 4);
            v = f;
        }
        return Tensor(std::move(shape), std::move(data));
    }
    bool at_end() const { return pos_ == in_.size(); }

   private:
    const std::string& in_;
    std::size_t pos_ = 0;
};

}  // namespace

void round_to_float(Tensor& t) {
    for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
}

void round_to_float(ParameterSet& params) {
    for (auto& p : params) round_to_float(p->value);
}

std::string serialize_checkpoint(const ModelConfig& config, const ParameterSet& params,
                                 const OptimizerState* optimizer, const KeyValues& metadata) {
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    KeyValues header = config.to_key_values();
    for (const auto& [k, v] : metadata) header["meta." + k] = v;
    w.str(format_key_values(header));
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        w.str(p->name);
        w.shape(p->value.shape());
        w.floats(p->value);
    }
    w.u8(optimizer != nullptr ? 1 : 0);
    if (optimizer != nullptr) {
        w.u64(optimizer->step);
        w.u32(static_cast<std::uint32_t>(optimizer->names.size()));
        for (std::size_t i = 0; i < optimizer->names.size(); ++i) {
            w.str(optimizer->names[i]);
            w.shape(optimizer->first_moment[i].shape());
            w.floats(optimizer->first_moment[i]);
            w.floats(optimizer->second_moment[i]);
        }
    }
    w.bytes(kTrailer, sizeof kTrailer);
    return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw CheckpointError("not a hanmt checkpoint (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw CheckpointError(fmt::format("checkpoint version {} is not supported (expected {})", version,
                                          kCheckpointVersion));
    }
    Checkpoint ckpt;
    KeyValues header;
    try {
        header = parse_key_values(r.str());
        ckpt.config = ModelConfig::from_key_values(header);
        ckpt.config.validate();
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError(fmt::format("corrupted checkpoint header: {}", e.what()));
    }
    for (const auto& [k, v] : header) {
        if (k.starts_with("meta.")) ckpt.metadata[k.substr(5)] = v;
    }
    const std::uint32_t n_params = r.u32();
    for (std::uint32_t i = 0; i < n_params; ++i) {
        NamedTensor t;
        t.name = r.str();
        t.value = r.floats(r.shape());
        ckpt.parameters.push_back(std::move(t));
    }
    if (r.u8() != 0) {
        OptimizerState opt;
        opt.step = r.u64();
        const std::uint32_t n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            opt.names.push_back(r.str());
            const Shape s = r.shape();
            opt.first_moment.push_back(r.floats(s));
            opt.second_moment.push_back(r.floats(s));
        }
        ckpt.optimizer = std::move(opt);
    }
    char trailer[8];
    r.bytes(trailer, sizeof trailer);
    if (std::memcmp(trailer, kTrailer, sizeof trailer) != 0 || !r.at_end()) {
        throw CheckpointError("checkpoint trailer missing or followed by extra bytes");
    }
    return ckpt;
}

void save_checkpoint(const std::string& path, const ModelConfig& config, const ParameterSet& params,
                     const OptimizerState* optimizer, const KeyValues& metadata) {
    const std::string bytes = serialize_checkpoint(config, params, optimizer, metadata);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(fmt::format("cannot write checkpoint '{}'", path));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(fmt::format("failed writing checkpoint '{}'", path));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(fmt::format("cannot open checkpoint '{}'", path));
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return deserialize_checkpoint(buf.str());
    } catch (const CheckpointError& e) {
        throw CheckpointError(fmt::format("{}: {}", path, e.what()));
    }
}

std::vector<std::string> assign_parameters(ParameterSet& params, const Checkpoint& ckpt) {
    // validate everything before touching the model
    std::vector<std::pair<Parameter*, const NamedTensor*>> plan;
    for (const auto& t : ckpt.parameters) {
        Parameter* p = params.find(t.name);
        if (p == nullptr) continue;
        if (p->value.shape() != t.value.shape()) {
            throw CheckpointError(fmt::format("parameter '{}' has shape {} in the checkpoint but {} in the model",
                                              t.name, shape_str(t.value.shape()), shape_str(p->value.shape())));
        }
        plan.emplace_back(p, &t);
    }
    for (auto& [p, t] : plan) p->value = t->value;
    std::vector<std::string> missing;
    for (const auto& p : params) {
        const bool provided = std::any_of(plan.begin(), plan.end(), [&](const auto& e) { return e.first == p.get(); });
        if (!provided) missing.push_back(p->name);
    }
    return missing;
}

}  // namespace hanmt
