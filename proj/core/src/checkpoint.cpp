// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "air/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "air/errors.hpp"

namespace air {

namespace {

constexpr char kMagic[4] = {'A', 'I', 'R', 'F'};

void put_u32(std::ostream& out, std::uint32_t value) {
    unsigned char bytes[4];
    for (int i = 0; i < 4; ++i) {
        bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

void put_u64(std::ostream& out, std::uint64_t value) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint32_t get_u32(std::istream& in, const std::string& source) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
        throw ValidationError(source + ": truncated checkpoint");
    }
    std::uint32_t value = 0;
    for (int i = 3; i >= 0; --i) {
        value = (value << 8) | bytes[i];
    }
    return value;
}

std::uint64_t get_u64(std::istream& in, const std::string& source) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
        throw ValidationError(source + ": truncated checkpoint");
    }
    std::uint64_t value = 0;
    for (int i = 7; i >= 0; --i) {
        value = (value << 8) | bytes[i];
    }
    return value;
}

}  // namespace

void save_checkpoint(const Parameters& params, std::ostream& out) {
    params.validate();
    out.write(kMagic, 4);
    put_u32(out, kCheckpointFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(params.config.num_layers));
    put_u32(out, static_cast<std::uint32_t>(params.config.num_heads));
    put_u32(out, static_cast<std::uint32_t>(params.config.model_dim));
    put_u32(out, static_cast<std::uint32_t>(params.config.vocab_size));
    put_u32(out, static_cast<std::uint32_t>(params.config.max_seq_len));
    put_u64(out, static_cast<std::uint64_t>(params.config.seed));
    put_u64(out, params.version);
    for (double value : params.data) {
        put_u64(out, std::bit_cast<std::uint64_t>(value));
    }
    if (!out) {
        throw RuntimeError("checkpoint: write failed");
    }
}

void save_checkpoint(const Parameters& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw RuntimeError("checkpoint: cannot open " + path + " for writing");
    }
    save_checkpoint(params, out);
}

Parameters load_checkpoint(std::istream& in, const std::string& source_name) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw ValidationError(source_name + ": not an AIRF checkpoint (bad magic)");
    }
    const std::uint32_t format = get_u32(in, source_name);
    if (format != kCheckpointFormatVersion) {
        std::ostringstream oss;
        oss << source_name << ": unsupported checkpoint format version " << format;
        throw ValidationError(oss.str());
    }
    Parameters params;
    params.config.num_layers = static_cast<int>(get_u32(in, source_name));
    params.config.num_heads = static_cast<int>(get_u32(in, source_name));
    params.config.model_dim = static_cast<int>(get_u32(in, source_name));
    params.config.vocab_size = static_cast<int>(get_u32(in, source_name));
    params.config.max_seq_len = static_cast<int>(get_u32(in, source_name));
    params.config.seed = static_cast<std::int64_t>(get_u64(in, source_name));
    params.version = get_u64(in, source_name);
    params.config.validate();

    const ParamLayout layout = make_layout(params.config);
    params.data.resize(layout.total);
    for (std::size_t i = 0; i < layout.total; ++i) {
        params.data[i] = std::bit_cast<double>(get_u64(in, source_name));
    }
    char extra = 0;
    if (in.read(&extra, 1)) {
        throw ValidationError(source_name + ": trailing bytes after tensor data");
    }
    params.validate();
    return params;
}

Parameters load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("checkpoint: cannot open " + path);
    }
    return load_checkpoint(in, path);
}

}  // namespace air
