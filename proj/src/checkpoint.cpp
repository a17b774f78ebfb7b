#include "pmem/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace pmem {

namespace {

using nlohmann::json;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
    uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(out, v);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n) {
        if (pos + n > buf.size())
            fail("ckpt_format", "truncated checkpoint: need ", n, " bytes at offset ", pos);
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        uint64_t v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

json meta_to_json(const Model& model_cfg_holder, const CheckpointExtras& extras,
                  const std::vector<std::string>& vocab_tokens,
                  const std::vector<int64_t>& boundaries) {
    const ModelConfig& cfg = model_cfg_holder.cfg;
    json j;
    j["config"] = {{"embed_dim", cfg.embed_dim},
                   {"hidden_dim", cfg.hidden_dim},
                   {"n_classes", cfg.n_classes},
                   {"cell", cell_kind_to_string(cfg.cell)},
                   {"use_bank", cfg.use_bank}};
    j["vocab"] = vocab_tokens;
    j["boundaries"] = boundaries;
    j["labels"] = extras.labels;
    j["domain_history"] = extras.domain_history;
    j["seed"] = extras.seed;
    j["method"] = extras.method;
    return j;
}

}  // namespace

const NamedArray* LoadedCheckpoint::find(const std::string& name) const {
    for (const NamedArray& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

void save_checkpoint(Model& model, const CheckpointExtras& extras, const std::string& path) {
    std::vector<Parameter*> params = model.parameters();

    std::string payload;
    std::string manifest;
    put_u32(manifest, static_cast<uint32_t>(params.size()));
    for (Parameter* p : params) {
        put_u32(manifest, static_cast<uint32_t>(p->name.size()));
        manifest += p->name;
        put_u32(manifest, static_cast<uint32_t>(p->value.rank()));
        for (int64_t d : p->value.shape) put_u64(manifest, static_cast<uint64_t>(d));
        put_u64(manifest, payload.size());
        for (double v : p->value.data) put_f64(payload, v);
    }

    std::vector<int64_t> boundaries =
        model.bank ? model.bank->domain_boundaries : std::vector<int64_t>{};
    std::string meta =
        meta_to_json(model, extras, model.vocab.tokens(), boundaries).dump();

    std::string out = "PMEM";
    put_u32(out, kCheckpointVersion);
    out += manifest;
    put_u64(out, meta.size());
    out += meta;
    uint32_t crc = static_cast<uint32_t>(
        crc32(0, reinterpret_cast<const Bytef*>(payload.data()),
              static_cast<uInt>(payload.size())));
    out += payload;
    put_u32(out, crc);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail("ckpt_io", "cannot open '", path, "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) fail("ckpt_io", "short write to '", path, "'");
}

LoadedCheckpoint read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("ckpt_io", "cannot open '", path, "'");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{buf};
    if (r.bytes(4) != "PMEM") fail("ckpt_magic", "'", path, "' is not a checkpoint file");
    LoadedCheckpoint ckpt;
    ckpt.version = r.u32();
    if (ckpt.version != kCheckpointVersion)
        fail("ckpt_version", "unsupported checkpoint version ", ckpt.version, " (expected ",
             kCheckpointVersion, ")");

    uint32_t count = r.u32();
    struct Entry {
        std::string name;
        std::vector<int64_t> shape;
        uint64_t offset;
    };
    std::vector<Entry> entries;
    for (uint32_t i = 0; i < count; ++i) {
        Entry e;
        e.name = r.bytes(r.u32());
        uint32_t rank = r.u32();
        if (rank < 1 || rank > 2) fail("ckpt_format", "array '", e.name, "' has rank ", rank);
        for (uint32_t d = 0; d < rank; ++d) e.shape.push_back(static_cast<int64_t>(r.u64()));
        e.offset = r.u64();
        entries.push_back(std::move(e));
    }

    std::string meta_text = r.bytes(static_cast<size_t>(r.u64()));

    if (buf.size() < r.pos + 4) fail("ckpt_format", "missing payload trailer");
    size_t payload_size = buf.size() - r.pos - 4;
    size_t payload_start = r.pos;
    uint32_t crc_stored = 0;
    {
        Reader tr{buf};
        tr.pos = buf.size() - 4;
        crc_stored = tr.u32();
    }
    uint32_t crc_actual = static_cast<uint32_t>(
        crc32(0, reinterpret_cast<const Bytef*>(buf.data() + payload_start),
              static_cast<uInt>(payload_size)));
    if (crc_actual != crc_stored)
        fail("ckpt_integrity", "payload checksum mismatch in '", path, "'");

    for (const Entry& e : entries) {
        int64_t numel = 1;
        for (int64_t d : e.shape) numel *= d;
        uint64_t end = e.offset + static_cast<uint64_t>(numel) * 8;
        if (end > payload_size)
            fail("ckpt_format", "array '", e.name, "' extends past the payload");
        Reader ar{buf};
        ar.pos = payload_start + e.offset;
        std::vector<double> data(static_cast<size_t>(numel));
        for (double& v : data) v = ar.f64();
        ckpt.arrays.push_back({e.name, Tensor(e.shape, std::move(data))});
    }

    json j;
    try {
        j = json::parse(meta_text);
        ckpt.config.embed_dim = j.at("config").at("embed_dim").get<int64_t>();
        ckpt.config.hidden_dim = j.at("config").at("hidden_dim").get<int64_t>();
        ckpt.config.n_classes = j.at("config").at("n_classes").get<int64_t>();
        ckpt.config.cell = cell_kind_from_string(j.at("config").at("cell").get<std::string>());
        ckpt.config.use_bank = j.at("config").at("use_bank").get<bool>();
        ckpt.vocab_tokens = j.at("vocab").get<std::vector<std::string>>();
        ckpt.boundaries = j.at("boundaries").get<std::vector<int64_t>>();
        ckpt.extras.labels = j.at("labels").get<std::vector<std::string>>();
        ckpt.extras.domain_history = j.at("domain_history").get<std::vector<std::string>>();
        ckpt.extras.seed = j.at("seed").get<uint64_t>();
        ckpt.extras.method = j.at("method").get<std::string>();
    } catch (const json::exception& e) {
        fail("ckpt_format", "bad checkpoint metadata: ", e.what());
    }
    return ckpt;
}

Model model_from_checkpoint(const LoadedCheckpoint& ckpt) {
    VocabMap vocab = VocabMap::from_tokens(ckpt.vocab_tokens);
    int64_t slots = 1;
    if (ckpt.config.use_bank) {
        if (ckpt.boundaries.empty()) fail("ckpt_format", "bank model without boundaries");
        slots = ckpt.boundaries.back();
    }
    Rng scratch(0);
    Model model = make_model(ckpt.config, std::move(vocab), slots, scratch);
    if (ckpt.config.use_bank) model.bank->domain_boundaries = ckpt.boundaries;

    for (Parameter* p : model.parameters()) {
        const NamedArray* a = ckpt.find(p->name);
        if (!a) fail("ckpt_shape", "checkpoint is missing array '", p->name, "'");
        if (a->tensor.shape != p->value.shape)
            fail("ckpt_shape", "array '", p->name, "' is ", shape_str(a->tensor),
                 " but the model expects ", shape_str(p->value));
        p->value = a->tensor;
        p->zero_grad();
    }
    return model;
}

void load_into_model(const LoadedCheckpoint& ckpt, Model& model) {
    if (static_cast<int64_t>(ckpt.vocab_tokens.size()) > model.vocab.size())
        fail("ckpt_shape", "stored vocabulary (", ckpt.vocab_tokens.size(),
             ") exceeds the model's (", model.vocab.size(), ")");
    for (size_t i = 0; i < ckpt.vocab_tokens.size(); ++i)
        if (model.vocab.token(static_cast<int32_t>(i)) != ckpt.vocab_tokens[i])
            fail("ckpt_shape", "stored vocabulary is not a prefix of the model's at id ", i);

    for (const NamedArray& a : ckpt.arrays) {
        Parameter* target = nullptr;
        for (Parameter* p : model.parameters())
            if (p->name == a.name) target = p;
        if (!target) fail("ckpt_shape", "model has no parameter named '", a.name, "'");
        const Tensor& src = a.tensor;
        Tensor& dst = target->value;
        if (src.rank() != dst.rank())
            fail("ckpt_shape", "rank mismatch for '", a.name, "': stored ", shape_str(src),
                 ", model ", shape_str(dst));
        for (int64_t d = 0; d < src.rank(); ++d)
            if (src.shape[static_cast<size_t>(d)] > dst.shape[static_cast<size_t>(d)])
                fail("ckpt_shape", "stored '", a.name, "' ", shape_str(src),
                     " exceeds model shape ", shape_str(dst));
        if (src.rank() == 1) {
            std::copy(src.data.begin(), src.data.end(), dst.data.begin());
        } else {
            for (int64_t i = 0; i < src.shape[0]; ++i)
                std::copy(src.data.begin() + i * src.shape[1],
                          src.data.begin() + (i + 1) * src.shape[1],
                          dst.data.begin() + i * dst.shape[1]);
        }
    }
}

}  // namespace pmem
