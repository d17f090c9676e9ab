#include "cflnet/data.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "cflnet/errors.hpp"

namespace fs = std::filesystem;

namespace cflnet {

namespace {

const std::vector<std::string> kImageExtensions = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"};

std::string find_image(const fs::path& dir, const std::string& id) {
    for (const auto& ext : kImageExtensions) {
        const auto p = dir / (id + ext);
        if (fs::exists(p)) return p.string();
    }
    return {};
}

std::vector<std::string> read_manifest(const fs::path& root, const std::string& split) {
    const auto manifest = root / (split + ".txt");
    std::vector<std::string> ids;
    if (fs::exists(manifest)) {
        std::ifstream in(manifest);
        if (!in) throw DataError("cannot read split manifest " + manifest.string());
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            ids.push_back(line);
        }
        return ids;
    }
    if (split != "all") throw DataError("missing split manifest " + manifest.string());
    const auto images = root / "images";
    if (!fs::is_directory(images)) return ids;
    for (const auto& entry : fs::directory_iterator(images)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (std::find(kImageExtensions.begin(), kImageExtensions.end(), ext) != kImageExtensions.end())
            ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

} // namespace

cv::Mat read_rgb(const std::string& path) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) throw DataError("cannot read image '" + path + "'");
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    return rgb;
}

cv::Mat binarize_mask(const cv::Mat& gray) {
    cv::Mat out;
    cv::threshold(gray, out, 127, 1, cv::THRESH_BINARY);
    return out;
}

LoadedDataset load_dataset(const std::string& root, const std::string& split) {
    const fs::path base(root);
    if (!fs::is_directory(base)) throw DataError("dataset root '" + root + "' is not a directory");
    LoadedDataset out;
    const auto tag = base.filename().string();
    for (const auto& id : read_manifest(base, split)) {
        const auto image_path = find_image(base / "images", id);
        if (image_path.empty()) throw DataError("manifest lists '" + id + "' but images/ has no file for it");
        const auto mask_path = base / "masks" / (id + ".png");
        if (!fs::exists(mask_path)) {
            ++out.missing_masks;
            out.warnings.push_back("no mask for '" + id + "', skipped");
            continue;
        }
        ForgerySample s;
        s.id = id;
        s.source_tag = tag;
        s.image = read_rgb(image_path);
        cv::Mat gray = cv::imread(mask_path.string(), cv::IMREAD_GRAYSCALE);
        if (gray.empty()) throw DataError("cannot read mask '" + mask_path.string() + "'");
        if (gray.size() != s.image.size())
            throw DataError("mask '" + mask_path.string() + "' does not match its image size");
        s.mask = binarize_mask(gray);
        out.samples.push_back(std::move(s));
    }
    return out;
}

void write_sample(const std::string& root, const ForgerySample& sample) {
    const fs::path base(root);
    fs::create_directories(base / "images");
    fs::create_directories(base / "masks");
    cv::Mat bgr;
    cv::cvtColor(sample.image, bgr, cv::COLOR_RGB2BGR);
    const auto image_path = (base / "images" / (sample.id + ".png")).string();
    const auto mask_path = (base / "masks" / (sample.id + ".png")).string();
    if (!cv::imwrite(image_path, bgr)) throw DataError("cannot write '" + image_path + "'");
    if (!cv::imwrite(mask_path, sample.mask * 255)) throw DataError("cannot write '" + mask_path + "'");
}

torch::Tensor image_to_tensor(const cv::Mat& rgb) {
    cv::Mat cont = rgb.isContinuous() ? rgb : rgb.clone();
    auto t = torch::from_blob(cont.data, {cont.rows, cont.cols, 3}, torch::kUInt8);
    return t.permute({2, 0, 1}).to(torch::kFloat32).contiguous();
}

ModelInput preprocess(const ForgerySample& sample, int image_size) {
    const cv::Size target(image_size, image_size);
    cv::Mat image = sample.image, mask = sample.mask;
    if (image.size() != target) cv::resize(sample.image, image, target, 0, 0, cv::INTER_LINEAR);
    if (mask.size() != target) cv::resize(sample.mask, mask, target, 0, 0, cv::INTER_NEAREST);
    ModelInput in;
    in.image = image_to_tensor(image);
    cv::Mat m = mask.isContinuous() ? mask : mask.clone();
    in.mask = torch::from_blob(m.data, {m.rows, m.cols}, torch::kUInt8).clone();
    return in;
}

} // namespace cflnet
