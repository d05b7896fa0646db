// SPDX-License-Identifier: Apache-2.0
//
// Reader/writer for the safetensors container: an 8-byte little-endian header
// length, a JSON header mapping tensor names to {dtype, shape, data_offsets},
// then the raw row-major payload.
#pragma once

#include "newsrec/autograd.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace newsrec::safetensors {

struct StoredTensor {
    std::vector<std::int64_t> shape;
    /// Row-major data viewed as rows x cols; 1-D tensors load as 1 x n.
    ag::Matrix data;
};

enum class DType { F32, F64 };

std::map<std::string, StoredTensor> load(const std::filesystem::path& path);

void save(const std::filesystem::path& path, const ag::ParameterList& params, DType dtype = DType::F64);

/// Copies stored values into params by name. Missing names or shape
/// mismatches throw std::runtime_error naming the tensor.
void assign(ag::ParameterList& params, const std::map<std::string, StoredTensor>& stored,
            const std::string& strip_prefix = {});

}  // namespace newsrec::safetensors
