#include "vigil/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <utility>

namespace vigil {

namespace {

constexpr char kMagic[4] = {'V', 'G', 'C', 'K'};
constexpr uint32_t kVersion = 1;

// Config scalars ride in one fixed-order meta entry; the 64-bit seed is
// split into 16-bit chunks so every value survives the f32 payload exactly.
constexpr size_t kConfigLen = 13;
constexpr size_t kSeedChunks = 4;

void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xffu));
    out.push_back(static_cast<char>((v >> 8) & 0xffu));
    out.push_back(static_cast<char>((v >> 16) & 0xffu));
    out.push_back(static_cast<char>((v >> 24) & 0xffu));
}

struct Cursor {
    const std::string& buf;
    size_t pos = 0;

    const char* take(size_t n) {
        if (pos + n > buf.size()) throw std::runtime_error("truncated checkpoint");
        const char* p = buf.data() + pos;
        pos += n;
        return p;
    }

    uint32_t u32() {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(take(4));
        return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
               static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
    }

    float f32() { return std::bit_cast<float>(u32()); }
};

std::vector<float> to_f32(std::span<const double> v) {
    std::vector<float> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    return out;
}

std::vector<double> to_f64(const std::vector<float>& v) {
    return std::vector<double>(v.begin(), v.end());
}

int64_t meta_int(float f) { return std::llround(static_cast<double>(f)); }

std::string fmt_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

CheckpointEntry vec_entry(std::string name, const std::vector<float>& data) {
    CheckpointEntry e;
    e.name = std::move(name);
    e.shape = {static_cast<int>(data.size())};
    e.data = data;
    return e;
}

std::vector<float> pack_config(const ModelConfig& c) {
    return {static_cast<float>(c.blocks),
            static_cast<float>(c.heads),
            static_cast<float>(c.embed_dim),
            static_cast<float>(c.patch),
            static_cast<float>(c.prompt_count),
            static_cast<float>(c.anomaly_types),
            static_cast<float>(c.anomaly_type),
            static_cast<float>(c.ffn_hidden),
            static_cast<float>(c.dylinear_base),
            static_cast<float>(c.dropout),
            c.per_feature_gates ? 1.0f : 0.0f,
            c.channel_identity ? 1.0f : 0.0f,
            c.mask_context_future ? 1.0f : 0.0f};
}

ModelConfig unpack_config(const std::vector<float>& v, const std::vector<float>& seed) {
    if (v.size() != kConfigLen || seed.size() != kSeedChunks)
        throw std::runtime_error("checkpoint config block has the wrong size");
    ModelConfig c;
    c.blocks = static_cast<int>(meta_int(v[0]));
    c.heads = static_cast<int>(meta_int(v[1]));
    c.embed_dim = meta_int(v[2]);
    c.patch = meta_int(v[3]);
    c.prompt_count = meta_int(v[4]);
    c.anomaly_types = static_cast<int>(meta_int(v[5]));
    c.anomaly_type = static_cast<int>(meta_int(v[6]));
    c.ffn_hidden = meta_int(v[7]);
    c.dylinear_base = meta_int(v[8]);
    c.dropout = static_cast<double>(v[9]);
    c.per_feature_gates = v[10] != 0.0f;
    c.channel_identity = v[11] != 0.0f;
    c.mask_context_future = v[12] != 0.0f;
    c.seed = 0;
    for (size_t i = 0; i < kSeedChunks; ++i)
        c.seed |= static_cast<uint64_t>(meta_int(seed[i]) & 0xffff) << (16 * i);
    return c;
}

std::vector<float> pack_seed(uint64_t seed) {
    std::vector<float> out(kSeedChunks);
    for (size_t i = 0; i < kSeedChunks; ++i)
        out[i] = static_cast<float>((seed >> (16 * i)) & 0xffff);
    return out;
}

std::string role_tag(ChannelRole r) { return r == ChannelRole::target ? "t" : "c"; }

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
}

void write_manifest(const std::string& path, const Model& model,
                    const std::vector<std::string>& names,
                    const std::vector<ChannelRole>& roles) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    const ModelConfig& c = model.config();
    const WindowSpec& w = model.window_spec();
    out << "format = vgck.v" << kVersion << "\n";
    out << "blocks = " << c.blocks << "\n";
    out << "heads = " << c.heads << "\n";
    out << "embed_dim = " << c.embed_dim << "\n";
    out << "patch = " << c.patch << "\n";
    out << "prompt_count = " << c.prompt_count << "\n";
    out << "anomaly_types = " << c.anomaly_types << "\n";
    out << "anomaly_type = " << c.anomaly_type << "\n";
    out << "ffn_hidden = " << c.ffn_hidden << "\n";
    out << "dylinear_base = " << c.dylinear_base << "\n";
    out << "dropout = " << fmt_g17(c.dropout) << "\n";
    out << "per_feature_gates = " << (c.per_feature_gates ? 1 : 0) << "\n";
    out << "channel_identity = " << (c.channel_identity ? 1 : 0) << "\n";
    out << "mask_context_future = " << (c.mask_context_future ? 1 : 0) << "\n";
    out << "seed = " << c.seed << "\n";
    out << "window_length = " << w.length << "\n";
    out << "window_stride = " << w.stride << "\n";
    out << "window_past = " << w.past_len << "\n";
    out << "window_future = " << w.future_len << "\n";
    for (ChannelRole want : {ChannelRole::target, ChannelRole::context}) {
        out << (want == ChannelRole::target ? "targets = " : "contexts = ");
        bool first = true;
        for (size_t i = 0; i < names.size(); ++i) {
            if (roles[i] != want) continue;
            if (!first) out << ",";
            out << names[i];
            first = false;
        }
        out << "\n";
    }
    out << "trained = " << (model.trained() ? 1 : 0) << "\n";
    out << "epochs = " << model.loss_trace().size() << "\n";
    out << "loss_trace = ";
    for (size_t i = 0; i < model.loss_trace().size(); ++i) {
        if (i) out << ",";
        out << fmt_g17(model.loss_trace()[i]);
    }
    out << "\n";
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
}

}  // namespace

std::vector<CheckpointEntry> read_checkpoint_entries(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Cursor cur{bytes};
    const char* magic = cur.take(4);
    if (std::string(magic, 4) != std::string(kMagic, 4))
        throw std::runtime_error("not a checkpoint file (bad magic): " + path);
    uint32_t version = cur.u32();
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

    uint32_t count = cur.u32();
    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    std::set<std::string> seen;
    for (uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        uint32_t name_len = cur.u32();
        e.name.assign(cur.take(name_len), name_len);
        if (!seen.insert(e.name).second)
            throw std::runtime_error("duplicate checkpoint entry: " + e.name);
        uint32_t rank = cur.u32();
        if (rank > 8) throw std::runtime_error("checkpoint entry rank overflows: " + e.name);
        e.shape.resize(rank);
        for (uint32_t d = 0; d < rank; ++d) {
            uint32_t dim = cur.u32();
            if (dim > 0x7fffffffu)
                throw std::runtime_error("checkpoint entry dimension overflows: " + e.name);
            e.shape[d] = static_cast<int>(dim);
        }
        int64_t numel = shape_numel(e.shape);
        if (numel < 0 || numel > static_cast<int64_t>((bytes.size() - cur.pos) / 4))
            throw std::runtime_error("truncated checkpoint");
        e.data.resize(static_cast<size_t>(numel));
        for (int64_t j = 0; j < numel; ++j) e.data[static_cast<size_t>(j)] = cur.f32();
        entries.push_back(std::move(e));
    }
    if (cur.pos != bytes.size())
        throw std::runtime_error("trailing bytes after the last checkpoint entry: " + path);
    return entries;
}

void save_checkpoint(const std::string& path, const Model& model,
                     const std::vector<std::string>& channel_names,
                     const std::vector<ChannelRole>& roles) {
    if (channel_names.size() != roles.size())
        throw std::invalid_argument("channel names and roles differ in length");
    int n = 0, m = 0;
    for (ChannelRole r : roles) (r == ChannelRole::target ? n : m) += 1;
    if (n != model.targets() || m != model.contexts())
        throw std::invalid_argument("channel roles do not match the model's target/context split");
    if (model.trained() && model.scaler().channel_names != channel_names)
        throw std::invalid_argument("scaler channels do not match the given channel names");

    std::vector<CheckpointEntry> entries;
    entries.push_back(vec_entry("meta.config", pack_config(model.config())));
    entries.push_back(vec_entry("meta.seed", pack_seed(model.config().seed)));
    const WindowSpec& w = model.window_spec();
    entries.push_back(vec_entry("meta.window",
                                {static_cast<float>(w.length), static_cast<float>(w.stride),
                                 static_cast<float>(w.past_len), static_cast<float>(w.future_len)}));
    entries.push_back(vec_entry("meta.trained", {model.trained() ? 1.0f : 0.0f}));
    entries.push_back(vec_entry("meta.loss_trace", to_f32(model.loss_trace())));
    const Standardizer& sc = model.scaler();
    entries.push_back(vec_entry("meta.scaler.mean", to_f32(sc.mean)));
    entries.push_back(vec_entry("meta.scaler.std", to_f32(sc.stdev)));
    for (size_t i = 0; i < channel_names.size(); ++i) {
        entries.push_back(vec_entry("schema.channel." + std::to_string(i) + "." +
                                        role_tag(roles[i]) + "." + channel_names[i],
                                    {static_cast<float>(i)}));
    }
    for (const auto& [name, t] : model.params().named()) {
        CheckpointEntry e;
        e.name = name;
        e.shape = t.shape();
        e.data = to_f32(t.value());
        entries.push_back(std::move(e));
    }

    std::string bytes(kMagic, 4);
    put_u32(bytes, kVersion);
    put_u32(bytes, static_cast<uint32_t>(entries.size()));
    for (const CheckpointEntry& e : entries) {
        put_u32(bytes, static_cast<uint32_t>(e.name.size()));
        bytes.append(e.name);
        put_u32(bytes, static_cast<uint32_t>(e.shape.size()));
        for (int d : e.shape) put_u32(bytes, static_cast<uint32_t>(d));
        for (float f : e.data) put_u32(bytes, std::bit_cast<uint32_t>(f));
    }
    write_file(path, bytes);
    write_manifest(path + ".manifest", model, channel_names, roles);
}

LoadedModel load_checkpoint(const std::string& path) {
    std::vector<CheckpointEntry> entries = read_checkpoint_entries(path);
    std::map<std::string, const CheckpointEntry*> index;
    for (const CheckpointEntry& e : entries) index[e.name] = &e;
    std::set<std::string> consumed;
    auto need = [&](const std::string& name) -> const CheckpointEntry& {
        auto it = index.find(name);
        if (it == index.end())
            throw std::runtime_error("checkpoint is missing entry: " + name);
        consumed.insert(name);
        return *it->second;
    };

    ModelConfig cfg = unpack_config(need("meta.config").data, need("meta.seed").data);
    const std::vector<float>& wv = need("meta.window").data;
    if (wv.size() != 4) throw std::runtime_error("checkpoint window block has the wrong size");
    WindowSpec spec;
    spec.length = meta_int(wv[0]);
    spec.stride = meta_int(wv[1]);
    spec.past_len = meta_int(wv[2]);
    spec.future_len = meta_int(wv[3]);

    // Channel schema entries carry their frame position and role in the name.
    LoadedModel out;
    std::map<int64_t, std::pair<ChannelRole, std::string>> channels;
    const std::string prefix = "schema.channel.";
    for (const CheckpointEntry& e : entries) {
        if (e.name.rfind(prefix, 0) != 0) continue;
        consumed.insert(e.name);
        std::string rest = e.name.substr(prefix.size());
        size_t dot = rest.find('.');
        if (dot == std::string::npos || dot == 0 || dot + 2 >= rest.size() ||
            rest[dot + 2] != '.' || (rest[dot + 1] != 't' && rest[dot + 1] != 'c'))
            throw std::runtime_error("malformed checkpoint entry name: " + e.name);
        int64_t pos;
        try {
            pos = std::stoll(rest.substr(0, dot));
        } catch (const std::exception&) {
            throw std::runtime_error("malformed checkpoint entry name: " + e.name);
        }
        ChannelRole role = rest[dot + 1] == 't' ? ChannelRole::target : ChannelRole::context;
        std::string name = rest.substr(dot + 3);
        if (name.empty() || !channels.emplace(pos, std::make_pair(role, name)).second)
            throw std::runtime_error("malformed checkpoint entry name: " + e.name);
    }
    int n = 0, m = 0;
    int64_t next = 0;
    for (const auto& [pos, ch] : channels) {
        if (pos != next++)
            throw std::runtime_error("checkpoint channel schema has gaps");
        out.roles.push_back(ch.first);
        out.channel_names.push_back(ch.second);
        (ch.first == ChannelRole::target ? n : m) += 1;
    }

    out.model = std::make_unique<Model>(cfg, spec, n, m);
    for (auto& [name, t] : out.model->params().named()) {
        const CheckpointEntry& e = need(name);
        if (e.shape != t.shape())
            throw std::runtime_error("checkpoint entry " + name + " has shape " +
                                     shape_str(e.shape) + ", expected " + shape_str(t.shape()));
        std::span<double> dst = t.raw_value();
        for (size_t i = 0; i < e.data.size(); ++i) dst[i] = static_cast<double>(e.data[i]);
    }

    bool trained = need("meta.trained").data.at(0) != 0.0f;
    const CheckpointEntry& mean = need("meta.scaler.mean");
    const CheckpointEntry& stdev = need("meta.scaler.std");
    if (trained) {
        if (mean.data.size() != out.channel_names.size() || stdev.data.size() != mean.data.size())
            throw std::runtime_error("checkpoint scaler does not cover every channel");
        Standardizer sc;
        sc.channel_names = out.channel_names;
        sc.mean = to_f64(mean.data);
        sc.stdev = to_f64(stdev.data);
        out.model->set_scaler(std::move(sc));
        out.model->set_trained(true);
    }
    out.model->set_loss_trace(to_f64(need("meta.loss_trace").data));

    for (const CheckpointEntry& e : entries)
        if (!consumed.count(e.name))
            throw std::runtime_error("unexpected checkpoint entry: " + e.name);
    return out;
}

}  // namespace vigil
