#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmrl/tensor.hpp"

namespace mmrl {

/// Paired views of the same entities: an image tensor view M0 [N x C x H x W]
/// and a feature matrix view M1 [N x n2], plus optional supervision signals.
struct MultiModalDataset {
    Tensor m0;
    Tensor m1;
    std::vector<int> labels;      // binary; empty when absent
    std::vector<double> targets;  // empty when absent
    std::vector<std::string> entity_ids;

    std::size_t rows() const { return m0.extent(0); }
    bool has_labels() const { return !labels.empty(); }
    bool has_targets() const { return !targets.empty(); }
};

struct SynthSpec {
    std::size_t n = 256;
    std::size_t latent_dim = 8;
    std::size_t channels = 1;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t feature_dim = 32;
    double noise_sigma = 0.05;
    std::uint64_t seed = 0;
};

// Both views and both supervision signals derive from one latent matrix
// Z [N x r]: M1 = Z.A + noise, M0 renders each latent coordinate onto a fixed
// 2-D cosine basis image, labels = sign(Z.w), targets = Z.v (+ sigma-scaled
// noise). Noise-free specs give exactly recoverable structure.
MultiModalDataset generate_synthetic(const SynthSpec& spec);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    double ratio = 0.8;
    std::uint64_t seed = 0;
};

// Seeded permutation, then prefix split with |train| = round(ratio * N).
Split make_split(std::size_t n, double ratio, std::uint64_t seed);

// Dataset directory: manifest.json plus one MMTF file per tensor.
void save_dataset(const std::filesystem::path& dir, const MultiModalDataset& dataset,
                  const SynthSpec* generator_spec = nullptr);
MultiModalDataset load_dataset(const std::filesystem::path& dir);

}  // namespace mmrl
