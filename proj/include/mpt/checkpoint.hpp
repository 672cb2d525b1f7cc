#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpt/errors.hpp"
#include "mpt/model.hpp"

namespace mpt {

// Checkpoint layout, little-endian throughout:
//   bytes 0-3   magic "MPTC"
//   u32         format version (1)
//   u64         header length in bytes
//   header      UTF-8 JSON {config, tensors: name -> {shape, byte_offset, byte_len}}
//   data        raw 32-bit float payload; offsets are relative to its start
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& out, uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v >> 16),
                    static_cast<uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline uint32_t get_u32(std::istream& in) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw io_error("truncated checkpoint header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint64_t get_u64(std::istream& in) {
    uint8_t b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw io_error("truncated checkpoint header");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

} // namespace detail

inline void save_checkpoint(const std::string& path, const mpt_model& model) {
    nlohmann::json tensors = nlohmann::json::object();
    uint64_t offset = 0;
    for (const auto& name : model.param_names()) {
        const auto& t = model.param(name);
        const uint64_t len = static_cast<uint64_t>(t.numel()) * sizeof(float);
        tensors[name] = {{"shape", t.shape()}, {"byte_offset", offset}, {"byte_len", len}};
        offset += len;
    }
    nlohmann::json header = {{"config", model.config()}, {"tensors", tensors}};
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write '" + path + "'");
    out.write("MPTC", 4);
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u64(out, htext.size());
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& name : model.param_names()) {
        const auto& t = model.param(name);
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    if (!out) throw io_error("short write to '" + path + "'");
}

// Rebuilds the model from the stored config, validates every tensor's shape
// against the config-derived registry, then copies the payload in place.
inline mpt_model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "'");
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MPTC", 4) != 0)
        throw io_error("'" + path + "': not a checkpoint (bad magic)");
    const uint32_t version = detail::get_u32(in);
    if (version != kCheckpointVersion)
        throw io_error("'" + path + "': unsupported checkpoint version " + std::to_string(version));
    const uint64_t hlen = detail::get_u64(in);
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (static_cast<uint64_t>(in.gcount()) != hlen) throw io_error("'" + path + "': truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw io_error("'" + path + "': corrupt header (" + e.what() + ")");
    }
    model_config cfg;
    try {
        cfg = header.at("config").get<model_config>();
    } catch (const nlohmann::json::exception& e) {
        throw config_error("'" + path + "': bad config in header (" + e.what() + ")");
    }

    mpt_model model(cfg, 0);
    const auto& tensors = header.at("tensors");
    const std::streampos data_start = in.tellg();
    for (const auto& name : model.param_names()) {
        if (!tensors.contains(name)) throw config_error("'" + path + "': missing tensor '" + name + "'");
        const auto& entry = tensors.at(name);
        const shape_t shape = entry.at("shape").get<shape_t>();
        auto& t = model.param(name);
        if (shape != t.shape())
            throw config_error("'" + path + "': tensor '" + name + "' has shape " + shape_str(shape) +
                               ", config requires " + shape_str(t.shape()));
        const uint64_t off = entry.at("byte_offset").get<uint64_t>();
        const uint64_t len = entry.at("byte_len").get<uint64_t>();
        if (len != static_cast<uint64_t>(t.numel()) * sizeof(float))
            throw config_error("'" + path + "': tensor '" + name + "' byte length mismatch");
        in.seekg(data_start + static_cast<std::streamoff>(off));
        in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(len));
        if (static_cast<uint64_t>(in.gcount()) != len)
            throw io_error("'" + path + "': truncated data for tensor '" + name + "'");
    }
    return model;
}

} // namespace mpt
