#pragma once

// Forgery samples, dataset ingestion and model-ready preprocessing.
//
// Dataset layout:
//   root/images/<id>.<png|jpg|jpeg|bmp|tif|tiff>
//   root/masks/<id>.png        8-bit single channel, 0 authentic, 255 tampered
//   root/<split>.txt           one id per line (blank lines and '#' ignored)
// The split "all" falls back to every image in images/ (sorted by id) when
// no all.txt manifest exists.

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include <string>
#include <vector>

namespace cflnet {

struct ForgerySample {
    std::string id;
    std::string source_tag;
    cv::Mat image;  // CV_8UC3, RGB order
    cv::Mat mask;   // CV_8UC1, values in {0, 1}
};

struct LoadedDataset {
    std::vector<ForgerySample> samples;
    int missing_masks = 0;
    std::vector<std::string> warnings;
};

/// Throws DataError on unreadable files or a missing manifest.
LoadedDataset load_dataset(const std::string& root, const std::string& split);

/// Writes images/<id>.png, masks/<id>.png (0/255) under root.
void write_sample(const std::string& root, const ForgerySample& sample);

/// Binarises an 8-bit mask at > 127.
cv::Mat binarize_mask(const cv::Mat& gray);

struct ModelInput {
    torch::Tensor image;  // 3 x S x S float, raw [0, 255]
    torch::Tensor mask;   // S x S uint8 in {0, 1}
};

/// Bilinear resize of the image, nearest-neighbour resize of the mask.
/// Colour standardisation happens inside the model (the SRM stream needs raw
/// pixel values).
ModelInput preprocess(const ForgerySample& sample, int image_size);

/// HWC RGB 8-bit image to a 3 x H x W float tensor.
torch::Tensor image_to_tensor(const cv::Mat& rgb);

/// Reads an image file as RGB. Throws DataError if unreadable.
cv::Mat read_rgb(const std::string& path);

} // namespace cflnet
