#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "davss/types.hpp"

namespace davss {

// On-disk layout: "CMT1" | dtype u8 | ndim u8 | ndim x u32 LE dims | payload.
enum class Dtype : std::uint8_t { U8 = 0, F32 = 1 };

inline size_t dtype_size(Dtype d) { return d == Dtype::U8 ? 1 : 4; }

struct Tensor {
    Dtype dtype = Dtype::U8;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> payload;

    size_t element_count() const;
};

struct TensorIoError : std::runtime_error {
    explicit TensorIoError(const std::string& what) : std::runtime_error(what) {}
};

void write_tensor(const std::filesystem::path& path, Dtype dtype,
                  const std::vector<std::uint32_t>& dims,
                  const std::vector<std::uint8_t>& payload);
Tensor read_tensor(const std::filesystem::path& path);

// Typed wrappers over the same format. Frames/flows/features store F32,
// labels store U8. Values are converted double <-> float at the boundary.
void save_frame(const std::filesystem::path& path, const Frame& f);
Frame load_frame(const std::filesystem::path& path);
void save_label(const std::filesystem::path& path, const LabelMap& l);
LabelMap load_label(const std::filesystem::path& path, int num_classes);
void save_flow(const std::filesystem::path& path, const FlowField& f);
FlowField load_flow(const std::filesystem::path& path);
void save_feature_map(const std::filesystem::path& path, const FeatureMap& f);
FeatureMap load_feature_map(const std::filesystem::path& path);

// Flat real-valued tensors (model parameters, bank entries).
void save_f32(const std::filesystem::path& path, const std::vector<std::uint32_t>& dims,
              const std::vector<double>& values);
std::pair<std::vector<std::uint32_t>, std::vector<double>> load_f32(const std::filesystem::path& path);

}  // namespace davss
