#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "sstage/model.hpp"

namespace sstage {

// Checkpoint layout, little-endian throughout:
//   "SSTG" | u8 version=1 | records... | u32 crc32(records)
// record: u16 name length | name bytes | u8 rank | u32 dims[rank] | f32 values
// Records are sorted by name and cover parameters plus batch-norm running
// statistics, so a load reproduces eval outputs bit-for-bit.

namespace ckpt_detail {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const unsigned char* p;
    const unsigned char* end;
    bool done() const { return p == end; }
    void need(std::size_t n, const char* what) {
        if (static_cast<std::size_t>(end - p) < n) throw IoError(std::string("checkpoint truncated reading ") + what);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return *p++;
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
        p += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
        p += 4;
        return v;
    }
    float f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace ckpt_detail

struct CheckpointRecord {
    std::string name;
    Shape dims;
    std::vector<float> values;
};

template <class S>
std::string serialize_checkpoint(StageModel<S>& model) {
    auto entries = model.state_entries();
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    std::string payload;
    for (const auto& e : entries) {
        if (e.name.size() > 0xffff) throw ContractError("checkpoint: name too long");
        ckpt_detail::put_u16(payload, static_cast<std::uint16_t>(e.name.size()));
        payload += e.name;
        payload.push_back(static_cast<char>(e.shape.size()));
        for (int d : e.shape) ckpt_detail::put_u32(payload, static_cast<std::uint32_t>(d));
        for (const S v : *e.values) ckpt_detail::put_f32(payload, static_cast<float>(v));
    }
    std::string out = "SSTG";
    out.push_back(1);
    out += payload;
    const auto crc = static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
    ckpt_detail::put_u32(out, crc);
    return out;
}

template <class S>
void save_checkpoint(const std::string& path, StageModel<S>& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    const auto bytes = serialize_checkpoint(model);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

inline std::vector<CheckpointRecord> parse_checkpoint(const std::string& bytes) {
    if (bytes.size() < 9 || bytes.compare(0, 4, "SSTG") != 0) {
        throw IoError("not a checkpoint file (bad magic)");
    }
    if (static_cast<unsigned char>(bytes[4]) != 1) {
        throw IoError("unsupported checkpoint version " + std::to_string(static_cast<unsigned char>(bytes[4])));
    }
    const std::size_t payload_len = bytes.size() - 9;
    const unsigned char* payload = reinterpret_cast<const unsigned char*>(bytes.data()) + 5;
    ckpt_detail::Reader tail{payload + payload_len, payload + payload_len + 4};
    const std::uint32_t stored_crc = tail.u32("crc");
    const auto crc = static_cast<std::uint32_t>(::crc32(0L, payload, static_cast<uInt>(payload_len)));
    if (crc != stored_crc) throw IoError("checkpoint CRC mismatch (file is corrupt)");

    ckpt_detail::Reader r{payload, payload + payload_len};
    std::vector<CheckpointRecord> records;
    while (!r.done()) {
        CheckpointRecord rec;
        const std::uint16_t name_len = r.u16("name length");
        r.need(name_len, "name");
        rec.name.assign(reinterpret_cast<const char*>(r.p), name_len);
        r.p += name_len;
        const std::uint8_t rank = r.u8("rank");
        std::size_t count = 1;
        for (int i = 0; i < rank; ++i) {
            const std::uint32_t d = r.u32("dim");
            rec.dims.push_back(static_cast<int>(d));
            count *= d;
        }
        rec.values.resize(count);
        for (std::size_t i = 0; i < count; ++i) rec.values[i] = r.f32("values");
        records.push_back(std::move(rec));
    }
    return records;
}

inline std::vector<CheckpointRecord> read_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

// Reconstructs the architecture hyperparameters the weights imply.
inline ModelConfig config_from_records(const std::vector<CheckpointRecord>& records) {
    auto find = [&](const std::string& name) -> const CheckpointRecord& {
        for (const auto& r : records) {
            if (r.name == name) return r;
        }
        throw IoError("checkpoint is missing record '" + name + "'");
    };
    const auto& d_conv = find("d.conv.weight");
    const auto& prob_conv = find("prob.conv.weight");
    const auto& l1_conv = find("l1.conv.weight");
    if (d_conv.dims.size() != 4 || prob_conv.dims.size() != 4 || l1_conv.dims.size() != 4) {
        throw IoError("checkpoint convolution records have unexpected rank");
    }
    ModelConfig cfg;
    cfg.modes = prob_conv.dims[1];
    cfg.t_in = d_conv.dims[0];
    cfg.d_in = l1_conv.dims[0];
    cfg.d_out = cfg.d_in;
    if (cfg.modes < 1 || d_conv.dims[1] % cfg.modes != 0) {
        throw IoError("checkpoint decoder channels are inconsistent with the mode count");
    }
    cfg.t_out = d_conv.dims[1] / cfg.modes;
    return cfg;
}

template <class S>
void load_into_model(StageModel<S>& model, const std::vector<CheckpointRecord>& records) {
    auto entries = model.state_entries();
    if (entries.size() != records.size()) {
        throw IoError("checkpoint has " + std::to_string(records.size()) + " records, model expects " +
                      std::to_string(entries.size()));
    }
    for (const auto& rec : records) {
        bool found = false;
        for (auto& e : entries) {
            if (e.name != rec.name) continue;
            if (e.shape != rec.dims) {
                throw IoError("checkpoint record '" + rec.name + "' has shape " + shape_str(rec.dims) +
                              ", model expects " + shape_str(e.shape));
            }
            e.values->resize(rec.values.size());
            for (std::size_t i = 0; i < rec.values.size(); ++i) (*e.values)[i] = static_cast<S>(rec.values[i]);
            found = true;
            break;
        }
        if (!found) throw IoError("checkpoint record '" + rec.name + "' does not match any model state");
    }
}

template <class S>
std::unique_ptr<StageModel<S>> load_checkpoint(const std::string& path, double dropout_rate = 0.1) {
    const auto records = read_checkpoint_file(path);
    ModelConfig cfg = config_from_records(records);
    cfg.dropout_rate = dropout_rate;
    Rng init(0);
    auto model = std::make_unique<StageModel<S>>(cfg, init);
    load_into_model(*model, records);
    return model;
}

}  // namespace sstage
