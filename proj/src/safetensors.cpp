// SPDX-License-Identifier: Apache-2.0

#include "newsrec/safetensors.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace newsrec::safetensors {

static_assert(std::endian::native == std::endian::little, "safetensors payloads are little-endian");

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::pair<Eigen::Index, Eigen::Index> matrix_shape(const std::vector<std::int64_t>& shape) {
    if (shape.size() == 1) {
        return {1, shape[0]};
    }
    if (shape.size() == 2) {
        return {shape[0], shape[1]};
    }
    if (shape.empty()) {
        return {1, 1};
    }
    throw std::runtime_error("safetensors: only 0-, 1- and 2-D tensors are supported");
}

}  // namespace

std::map<std::string, StoredTensor> load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!in || header_len > (1ULL << 30)) {
        throw std::runtime_error("safetensors: bad header in " + path.string());
    }
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const auto meta = nlohmann::json::parse(header);
    std::map<std::string, StoredTensor> out;
    for (const auto& [name, info] : meta.items()) {
        if (name == "__metadata__") {
            continue;
        }
        StoredTensor t;
        t.shape = info.at("shape").get<std::vector<std::int64_t>>();
        const auto offsets = info.at("data_offsets").get<std::vector<std::uint64_t>>();
        const std::string dtype = info.at("dtype").get<std::string>();
        auto [rows, cols] = matrix_shape(t.shape);
        const std::size_t count = static_cast<std::size_t>(rows * cols);
        if (offsets.size() != 2 || offsets[1] > payload.size() || offsets[0] > offsets[1]) {
            throw std::runtime_error("safetensors: bad offsets for " + name);
        }
        const char* base = payload.data() + offsets[0];
        RowMajor m(rows, cols);
        if (dtype == "F64") {
            if (offsets[1] - offsets[0] != count * sizeof(double)) throw std::runtime_error("safetensors: size mismatch for " + name);
            std::memcpy(m.data(), base, count * sizeof(double));
        } else if (dtype == "F32") {
            if (offsets[1] - offsets[0] != count * sizeof(float)) throw std::runtime_error("safetensors: size mismatch for " + name);
            std::vector<float> buf(count);
            std::memcpy(buf.data(), base, count * sizeof(float));
            for (std::size_t i = 0; i < count; ++i) m.data()[i] = buf[i];
        } else if (dtype == "BF16" || dtype == "F16") {
            if (offsets[1] - offsets[0] != count * 2) throw std::runtime_error("safetensors: size mismatch for " + name);
            for (std::size_t i = 0; i < count; ++i) {
                std::uint16_t h = 0;
                std::memcpy(&h, base + 2 * i, 2);
                if (dtype == "BF16") {
                    m.data()[i] = std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16);
                } else {
                    // IEEE half -> float
                    const std::uint32_t sign = (h & 0x8000u) << 16;
                    std::uint32_t exp = (h >> 10) & 0x1Fu;
                    std::uint32_t mant = h & 0x3FFu;
                    float v;
                    if (exp == 0) {
                        v = std::ldexp(static_cast<float>(mant), -24);
                        if (sign) v = -v;
                    } else if (exp == 31) {
                        v = std::bit_cast<float>(sign | 0x7F800000u | (mant << 13));
                    } else {
                        v = std::bit_cast<float>(sign | ((exp + 112) << 23) | (mant << 13));
                    }
                    m.data()[i] = v;
                }
            }
        } else {
            throw std::runtime_error("safetensors: unsupported dtype " + dtype + " for " + name);
        }
        t.data = m;
        out.emplace(name, std::move(t));
    }
    return out;
}

void save(const std::filesystem::path& path, const ag::ParameterList& params, DType dtype) {
    nlohmann::json header = nlohmann::json::object();
    std::vector<char> payload;
    const std::size_t elem = dtype == DType::F64 ? sizeof(double) : sizeof(float);
    for (const auto& p : params) {
        const ag::Matrix& v = p.tensor.value();
        RowMajor rm = v;
        const std::size_t begin = payload.size();
        const std::size_t count = static_cast<std::size_t>(rm.size());
        payload.resize(begin + count * elem);
        if (dtype == DType::F64) {
            std::memcpy(payload.data() + begin, rm.data(), count * elem);
        } else {
            for (std::size_t i = 0; i < count; ++i) {
                const float f = static_cast<float>(rm.data()[i]);
                std::memcpy(payload.data() + begin + i * elem, &f, elem);
            }
        }
        nlohmann::json shape = p.is_vector ? nlohmann::json::array({v.cols()}) : nlohmann::json::array({v.rows(), v.cols()});
        header[p.name] = {{"dtype", dtype == DType::F64 ? "F64" : "F32"},
                          {"shape", shape},
                          {"data_offsets", {begin, payload.size()}}};
    }
    std::string text = header.dump();
    // Pad so the payload starts 8-byte aligned.
    while ((text.size() % 8) != 0) {
        text.push_back(' ');
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

void assign(ag::ParameterList& params, const std::map<std::string, StoredTensor>& stored,
            const std::string& strip_prefix) {
    std::map<std::string, const StoredTensor*> by_name;
    for (const auto& [name, t] : stored) {
        std::string key = name;
        if (!strip_prefix.empty() && key.starts_with(strip_prefix)) {
            key = key.substr(strip_prefix.size());
        }
        by_name[key] = &t;
    }
    for (auto& p : params) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) {
            throw std::runtime_error("missing tensor '" + p.name + "'");
        }
        const ag::Matrix& src = it->second->data;
        ag::Matrix& dst = p.tensor.mutable_value();
        if (src.rows() != dst.rows() || src.cols() != dst.cols()) {
            throw std::runtime_error("shape mismatch for tensor '" + p.name + "'");
        }
        dst = src;
    }
}

}  // namespace newsrec::safetensors
