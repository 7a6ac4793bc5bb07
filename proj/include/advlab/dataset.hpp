#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advlab/tensor.hpp"

namespace advlab {

struct Dataset {
    Tensor images{Shape{1, 1, 1, 1}};  // [N, C, H, W], values in [0,1]
    std::vector<int> labels;
    int num_classes = 0;
    std::string split_tag = "train";
    std::string provenance;

    std::size_t size() const { return labels.size(); }
    std::size_t pixels_per_image() const { return images.numel() / images.dim(0); }
    // One image as a [1, C, H, W] tensor.
    Tensor image(std::size_t i) const;
    Dataset subset(const std::vector<std::size_t>& indices) const;
    void validate() const;  // pixel range, label range, count agreement
};

Dataset load_idx(const std::string& images_path, const std::string& labels_path);
// Quantizes pixels to the u8 grid; save/load round-trips bit-exactly only for
// already-quantized data, so generators quantize at construction.
void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);

// Gaussian class blobs squashed to [0,1]; smoke corpus for oracle tests.
Dataset make_blobs(std::size_t n_per_class, int classes, std::size_t dim, double separation, std::uint64_t seed);

// Desk corpus: 28x28 single-channel images from per-class random templates
// with amplitude jitter, pixel noise, and small shifts.
Dataset make_desk_corpus(std::size_t n_per_class, int classes, std::uint64_t seed);

std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed);

}  // namespace advlab
