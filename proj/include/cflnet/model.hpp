#pragma once

// Two-stream forgery localisation network: an RGB ResNet encoder and an SRM
// residual ResNet encoder, fused by channel concatenation at the deepest
// stage, ASPP, bilinear upsampling, a segmentation head and (training only)
// a projection head producing the contrastive embedding map.

#include <torch/torch.h>

#include <optional>
#include <string>
#include <vector>

namespace cflnet {

struct ModelConfig {
    int input_size = 256;
    int embed_dim = 256;
    int num_classes = 2;
    std::vector<int> aspp_rates = {6, 12, 18};
    int aspp_channels = 256;        // ASPP branch width and head width
    std::string encoder = "resnet50";  // resnet50 | resnet18 | mini
    int encoder_stages = 4;         // 1..4; fusion happens after the last kept stage
    int head_stride = 1;            // 1 = heads at H x W; >1 = heads at H/s, logits upsampled
    bool freeze_rgb_bn = false;     // keep RGB-stream batch-norm statistics fixed

    /// Throws InvalidParameter on unsupported combinations.
    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    bool operator==(const ModelConfig&) const = default;
};

struct ModelOutput {
    torch::Tensor logits;                     // B x 2 x H x W, pre-softmax
    std::optional<torch::Tensor> projection;  // B x embed_dim x H/s x W/s, training only
    std::optional<torch::Tensor> head_features;  // penultimate segmentation-head map, on request
};

/// Residual encoder. `stages` truncates after that many residual stages.
class ResNetEncoderImpl : public torch::nn::Module {
public:
    ResNetEncoderImpl(const std::string& variant, int stages);
    torch::Tensor forward(const torch::Tensor& x);
    int out_channels() const { return out_channels_; }
    int stride() const { return stride_; }

private:
    torch::nn::Sequential stem_{nullptr};
    std::vector<torch::nn::Sequential> stages_;
    int out_channels_ = 0;
    int stride_ = 4;
};
TORCH_MODULE(ResNetEncoder);

class AsppImpl : public torch::nn::Module {
public:
    AsppImpl(int in_channels, int channels, const std::vector<int>& rates);
    torch::Tensor forward(const torch::Tensor& x);
    int branch_count() const { return static_cast<int>(branches_.size()) + 1; }

private:
    std::vector<torch::nn::Sequential> branches_;  // 1x1 + one per dilation rate
    torch::nn::Sequential pool_branch_{nullptr};
    torch::nn::Sequential project_{nullptr};
};
TORCH_MODULE(Aspp);

class CflNetImpl : public torch::nn::Module {
public:
    explicit CflNetImpl(ModelConfig config);

    /// `image` is B x 3 x H x W (or 3 x H x W) raw pixel values in [0, 255].
    /// The SRM residual is computed from the raw pixels; the RGB stream sees
    /// channel-standardised values. Throws InvalidInput on a wrong size.
    ModelOutput forward(const torch::Tensor& image, bool training, bool keep_head_features = false);

    /// Channel concatenation of the two deepest encoder maps.
    torch::Tensor encode_two_stream(const torch::Tensor& rgb, const torch::Tensor& srm);
    torch::Tensor segmentation_head(const torch::Tensor& feat, torch::Tensor* penultimate = nullptr);
    torch::Tensor projection_head(const torch::Tensor& feat);

    /// Standardised RGB-stream input from raw [0, 255] pixels.
    static torch::Tensor normalize_rgb(const torch::Tensor& raw);

    const ModelConfig& config() const { return config_; }
    ResNetEncoder rgb_encoder() const { return rgb_encoder_; }
    ResNetEncoder srm_encoder() const { return srm_encoder_; }
    Aspp aspp() const { return aspp_; }
    torch::nn::Sequential projection() const { return projection_; }

    void train(bool on = true) override;

private:
    ModelConfig config_;
    ResNetEncoder rgb_encoder_{nullptr};
    ResNetEncoder srm_encoder_{nullptr};
    Aspp aspp_{nullptr};
    torch::nn::Sequential seg_features_{nullptr};
    torch::nn::Conv2d seg_classifier_{nullptr};
    torch::nn::Sequential projection_{nullptr};
};
TORCH_MODULE(CflNet);

/// SRM residual of a raw-pixel batch (B x 3 x H x W), computed per image with
/// the parallel SRM kernel. Not differentiable.
torch::Tensor srm_residual(const torch::Tensor& raw);

} // namespace cflnet
