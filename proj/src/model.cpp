#include "cflnet/model.hpp"

#include <json.hpp>

#include <array>

#include "cflnet/errors.hpp"
#include "cflnet/srm.hpp"

namespace F = torch::nn::functional;
namespace nn = torch::nn;

namespace cflnet {

namespace {

nn::Conv2d conv(int in, int out, int kernel, int stride = 1, int padding = 0, int dilation = 1, bool bias = false) {
    return nn::Conv2d(
        nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding).dilation(dilation).bias(bias));
}

// Replicate padding keeps a constant field constant across the whole map,
// which matters when the dilation exceeds the feature-map size.
nn::Conv2d dilated_conv(int in, int out, int rate) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, 3)
                          .padding(rate)
                          .dilation(rate)
                          .bias(false)
                          .padding_mode(torch::kReplicate));
}

class BasicBlockImpl : public nn::Module {
public:
    static constexpr int kExpansion = 1;
    BasicBlockImpl(int in, int width, int stride) {
        conv1_ = register_module("conv1", conv(in, width, 3, stride, 1));
        bn1_ = register_module("bn1", nn::BatchNorm2d(width));
        conv2_ = register_module("conv2", conv(width, width, 3, 1, 1));
        bn2_ = register_module("bn2", nn::BatchNorm2d(width));
        if (stride != 1 || in != width)
            downsample_ = register_module("downsample", nn::Sequential(conv(in, width, 1, stride), nn::BatchNorm2d(width)));
    }
    torch::Tensor forward(const torch::Tensor& x) {
        auto out = torch::relu(bn1_(conv1_(x)));
        out = bn2_(conv2_(out));
        return torch::relu(out + (downsample_ ? downsample_->forward(x) : x));
    }

private:
    nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
    nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr};
    nn::Sequential downsample_{nullptr};
};
TORCH_MODULE(BasicBlock);

class BottleneckImpl : public nn::Module {
public:
    static constexpr int kExpansion = 4;
    BottleneckImpl(int in, int width, int stride) {
        const int out = width * kExpansion;
        conv1_ = register_module("conv1", conv(in, width, 1));
        bn1_ = register_module("bn1", nn::BatchNorm2d(width));
        conv2_ = register_module("conv2", conv(width, width, 3, stride, 1));
        bn2_ = register_module("bn2", nn::BatchNorm2d(width));
        conv3_ = register_module("conv3", conv(width, out, 1));
        bn3_ = register_module("bn3", nn::BatchNorm2d(out));
        if (stride != 1 || in != out)
            downsample_ = register_module("downsample", nn::Sequential(conv(in, out, 1, stride), nn::BatchNorm2d(out)));
    }
    torch::Tensor forward(const torch::Tensor& x) {
        auto out = torch::relu(bn1_(conv1_(x)));
        out = torch::relu(bn2_(conv2_(out)));
        out = bn3_(conv3_(out));
        return torch::relu(out + (downsample_ ? downsample_->forward(x) : x));
    }

private:
    nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
    nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr}, bn3_{nullptr};
    nn::Sequential downsample_{nullptr};
};
TORCH_MODULE(Bottleneck);

struct EncoderSpec {
    bool bottleneck;
    std::array<int, 4> blocks;
    int base_width;
};

EncoderSpec encoder_spec(const std::string& variant) {
    if (variant == "resnet50") return {true, {3, 4, 6, 3}, 64};
    if (variant == "resnet18") return {false, {2, 2, 2, 2}, 64};
    if (variant == "mini") return {false, {1, 1, 1, 1}, 16};
    throw InvalidParameter("unknown encoder variant '" + variant + "' (expected resnet50, resnet18 or mini)");
}

void init_weights(nn::Module& module) {
    torch::NoGradGuard guard;
    for (auto& m : module.modules(/*include_self=*/false)) {
        if (auto* c = m->as<nn::Conv2d>()) {
            nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanOut, torch::kReLU);
            if (c->bias.defined()) c->bias.zero_();
        } else if (auto* b = m->as<nn::BatchNorm2d>()) {
            b->weight.fill_(1.0);
            b->bias.zero_();
        }
    }
}

} // namespace

void ModelConfig::validate() const {
    encoder_spec(encoder);
    if (input_size < 8) throw InvalidParameter("input_size must be at least 8");
    if (embed_dim < 1) throw InvalidParameter("embed_dim must be positive");
    if (num_classes != 2) throw InvalidParameter("num_classes must be 2 (untampered, tampered)");
    if (aspp_channels < 1) throw InvalidParameter("aspp_channels must be positive");
    if (encoder_stages < 1 || encoder_stages > 4) throw InvalidParameter("encoder_stages must be in 1..4");
    if (head_stride < 1 || input_size % head_stride != 0)
        throw InvalidParameter("head_stride must be positive and divide input_size");
    for (int r : aspp_rates)
        if (r < 1) throw InvalidParameter("ASPP dilation rates must be positive");
}

std::string ModelConfig::to_json() const {
    nlohmann::json j = {{"input_size", input_size},       {"embed_dim", embed_dim},
                        {"num_classes", num_classes},     {"aspp_rates", aspp_rates},
                        {"aspp_channels", aspp_channels}, {"encoder", encoder},
                        {"encoder_stages", encoder_stages}, {"head_stride", head_stride},
                        {"freeze_rgb_bn", freeze_rgb_bn}};
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ModelConfig c;
        c.input_size = j.at("input_size").get<int>();
        c.embed_dim = j.at("embed_dim").get<int>();
        c.num_classes = j.at("num_classes").get<int>();
        c.aspp_rates = j.at("aspp_rates").get<std::vector<int>>();
        c.aspp_channels = j.at("aspp_channels").get<int>();
        c.encoder = j.at("encoder").get<std::string>();
        c.encoder_stages = j.at("encoder_stages").get<int>();
        c.head_stride = j.at("head_stride").get<int>();
        c.freeze_rgb_bn = j.value("freeze_rgb_bn", false);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model config: ") + e.what());
    }
}

ResNetEncoderImpl::ResNetEncoderImpl(const std::string& variant, int stages) {
    const auto spec = encoder_spec(variant);
    const int stem = spec.base_width;
    stem_ = register_module("stem", nn::Sequential(conv(3, stem, 7, 2, 3), nn::BatchNorm2d(stem), nn::ReLU(),
                                                   nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1))));
    int in = stem;
    for (int s = 0; s < stages; ++s) {
        const int width = spec.base_width << s;
        const int stride = s == 0 ? 1 : 2;
        nn::Sequential stage;
        for (int b = 0; b < spec.blocks[s]; ++b) {
            if (spec.bottleneck) {
                stage->push_back(Bottleneck(in, width, b == 0 ? stride : 1));
                in = width * BottleneckImpl::kExpansion;
            } else {
                stage->push_back(BasicBlock(in, width, b == 0 ? stride : 1));
                in = width;
            }
        }
        stages_.push_back(register_module("layer" + std::to_string(s + 1), stage));
        if (s > 0) stride_ *= 2;
    }
    out_channels_ = in;
}

torch::Tensor ResNetEncoderImpl::forward(const torch::Tensor& x) {
    auto out = stem_->forward(x);
    for (auto& stage : stages_) out = stage->forward(out);
    return out;
}

AsppImpl::AsppImpl(int in_channels, int channels, const std::vector<int>& rates) {
    branches_.push_back(register_module(
        "b0", nn::Sequential(conv(in_channels, channels, 1), nn::BatchNorm2d(channels), nn::ReLU())));
    for (std::size_t i = 0; i < rates.size(); ++i) {
        const int r = rates[i];
        branches_.push_back(register_module("b" + std::to_string(i + 1),
                                            nn::Sequential(dilated_conv(in_channels, channels, r),
                                                           nn::BatchNorm2d(channels), nn::ReLU())));
    }
    // Image-level branch: a 1x1 map cannot be batch-normalised at batch size 1,
    // so this branch uses a biased convolution instead.
    pool_branch_ = register_module(
        "pool", nn::Sequential(nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions(1)),
                               conv(in_channels, channels, 1, 1, 0, 1, /*bias=*/true), nn::ReLU()));
    const int concat = channels * static_cast<int>(branches_.size() + 1);
    project_ = register_module("project",
                               nn::Sequential(conv(concat, channels, 1), nn::BatchNorm2d(channels), nn::ReLU()));
}

torch::Tensor AsppImpl::forward(const torch::Tensor& x) {
    std::vector<torch::Tensor> outs;
    outs.reserve(branches_.size() + 1);
    for (auto& b : branches_) outs.push_back(b->forward(x));
    outs.push_back(pool_branch_->forward(x).expand({-1, -1, x.size(2), x.size(3)}));
    return project_->forward(torch::cat(outs, 1));
}

CflNetImpl::CflNetImpl(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    rgb_encoder_ = register_module("rgb_encoder", ResNetEncoder(config_.encoder, config_.encoder_stages));
    srm_encoder_ = register_module("srm_encoder", ResNetEncoder(config_.encoder, config_.encoder_stages));
    const int fused = rgb_encoder_->out_channels() + srm_encoder_->out_channels();
    const int c = config_.aspp_channels;
    aspp_ = register_module("aspp", Aspp(fused, c, config_.aspp_rates));
    seg_features_ = register_module("seg_head", nn::Sequential(conv(c, c, 3, 1, 1, 1, true), nn::ReLU()));
    seg_classifier_ = register_module("seg_classifier", conv(c, config_.num_classes, 1, 1, 0, 1, true));
    projection_ = register_module("projection_head",
                                  nn::Sequential(conv(c, config_.embed_dim, 1), nn::BatchNorm2d(config_.embed_dim),
                                                 nn::ReLU(), conv(config_.embed_dim, config_.embed_dim, 1, 1, 0, 1, true)));
    init_weights(*this);
}

void CflNetImpl::train(bool on) {
    nn::Module::train(on);
    if (on && config_.freeze_rgb_bn)
        for (auto& m : rgb_encoder_->modules(false))
            if (m->as<nn::BatchNorm2d>()) m->eval();
}

torch::Tensor CflNetImpl::normalize_rgb(const torch::Tensor& raw) {
    auto opts = raw.options();
    auto mean = torch::tensor({0.485, 0.456, 0.406}, opts).view({1, 3, 1, 1});
    auto std = torch::tensor({0.229, 0.224, 0.225}, opts).view({1, 3, 1, 1});
    return (raw / 255.0 - mean) / std;
}

torch::Tensor CflNetImpl::encode_two_stream(const torch::Tensor& rgb, const torch::Tensor& srm) {
    if (rgb.dim() != 4 || srm.dim() != 4 || rgb.sizes() != srm.sizes())
        throw InvalidInput("encode_two_stream: RGB and SRM inputs must be equally sized B x 3 x H x W batches");
    return torch::cat({rgb_encoder_->forward(rgb), srm_encoder_->forward(srm)}, 1);
}

torch::Tensor CflNetImpl::segmentation_head(const torch::Tensor& feat, torch::Tensor* penultimate) {
    auto h = seg_features_->forward(feat);
    if (penultimate) *penultimate = h;
    return seg_classifier_->forward(h);
}

torch::Tensor CflNetImpl::projection_head(const torch::Tensor& feat) { return projection_->forward(feat); }

ModelOutput CflNetImpl::forward(const torch::Tensor& image, bool training, bool keep_head_features) {
    auto x = image.dim() == 3 ? image.unsqueeze(0) : image;
    const int64_t s = config_.input_size;
    if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != s || x.size(3) != s)
        throw InvalidInput("forward: expected input of shape [B, 3, " + std::to_string(s) + ", " + std::to_string(s) +
                           "], got " + c10::str(x.sizes()));
    const auto srm = srm_residual(x);
    const auto fused = encode_two_stream(normalize_rgb(x), srm);
    const auto multi_scale = aspp_->forward(fused);
    const int64_t hs = s / config_.head_stride;
    const auto up = F::interpolate(multi_scale, F::InterpolateFuncOptions()
                                                    .size(std::vector<int64_t>{hs, hs})
                                                    .mode(torch::kBilinear)
                                                    .align_corners(false));
    ModelOutput out;
    torch::Tensor penultimate;
    out.logits = segmentation_head(up, keep_head_features ? &penultimate : nullptr);
    if (config_.head_stride > 1)
        out.logits = F::interpolate(out.logits, F::InterpolateFuncOptions()
                                                    .size(std::vector<int64_t>{s, s})
                                                    .mode(torch::kBilinear)
                                                    .align_corners(false));
    if (keep_head_features) out.head_features = penultimate;
    if (training) out.projection = projection_head(up);
    return out;
}

torch::Tensor srm_residual(const torch::Tensor& raw) {
    auto x = raw.detach().contiguous();
    if (x.dim() != 4 || x.size(1) != 3) throw InvalidInput("srm_residual: expected B x 3 x H x W");
    const int h = static_cast<int>(x.size(2)), w = static_cast<int>(x.size(3));
    auto out = torch::empty_like(x);
    const int64_t per_image = 3 * static_cast<int64_t>(h) * w;
    AT_DISPATCH_FLOATING_TYPES(x.scalar_type(), "srm_residual", [&] {
        const scalar_t* src = x.data_ptr<scalar_t>();
        scalar_t* dst = out.data_ptr<scalar_t>();
        for (int64_t b = 0; b < x.size(0); ++b) {
            const auto res = srm::apply_srm<scalar_t>(
                std::span<const scalar_t>(src + b * per_image, static_cast<std::size_t>(per_image)), 3, h, w);
            std::copy(res.begin(), res.end(), dst + b * per_image);
        }
    });
    return out;
}

} // namespace cflnet
