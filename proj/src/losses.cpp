#include "cflnet/losses.hpp"

#include <cmath>

#include "cflnet/contrastive.hpp"
#include "cflnet/errors.hpp"

namespace cflnet {

namespace {

void check_binary_mask(const torch::Tensor& mask) {
    if (mask.numel() == 0) throw InvalidInput("mask is empty");
    const auto lo = mask.min().item<double>();
    const auto hi = mask.max().item<double>();
    if (lo < 0 || hi > 1 || !torch::equal(mask, mask.round()))
        throw InvalidInput("mask must be binary (0/1)");
}

class PatchSupConFunction : public torch::autograd::Function<PatchSupConFunction> {
public:
    static torch::autograd::variable_list forward(torch::autograd::AutogradContext* ctx, torch::Tensor projection,
                                                  torch::Tensor mask, int64_t grid, double temperature,
                                                  bool sum_over_batch) {
        auto proj = projection.detach().contiguous();
        auto m = mask.to(torch::kUInt8).contiguous();
        const int64_t batch = proj.size(0);
        const int channels = static_cast<int>(proj.size(1));
        const int h = static_cast<int>(proj.size(2)), w = static_cast<int>(proj.size(3));
        const int mh = static_cast<int>(m.size(1)), mw = static_cast<int>(m.size(2));
        const bool want_grad = projection.requires_grad();
        auto grad = want_grad ? torch::zeros_like(proj) : torch::Tensor();
        double total = 0.0;
        int64_t anchors = 0;
        const int64_t per_image = static_cast<int64_t>(channels) * h * w;
        const int64_t mask_per_image = static_cast<int64_t>(mh) * mw;
        AT_DISPATCH_FLOATING_TYPES(proj.scalar_type(), "patch_supcon", [&] {
            const scalar_t* src = proj.data_ptr<scalar_t>();
            const std::uint8_t* msrc = m.data_ptr<std::uint8_t>();
            for (int64_t b = 0; b < batch; ++b) {
                auto r = contrastive::patch_supcon<scalar_t>(
                    std::span<const scalar_t>(src + b * per_image, static_cast<std::size_t>(per_image)), channels, h,
                    w,
                    std::span<const std::uint8_t>(msrc + b * mask_per_image, static_cast<std::size_t>(mask_per_image)),
                    mh, mw, static_cast<int>(grid), temperature, want_grad);
                total += r.loss;
                anchors += r.anchors_used;
                if (want_grad) std::copy(r.grad.begin(), r.grad.end(), grad.data_ptr<scalar_t>() + b * per_image);
            }
        });
        const double scale = sum_over_batch ? 1.0 : 1.0 / static_cast<double>(batch);
        if (want_grad) ctx->save_for_backward({grad * scale});
        auto loss = torch::full({}, total * scale, proj.options());
        auto count = torch::full({}, anchors, torch::kLong);
        ctx->mark_non_differentiable({count});
        return {loss, count};
    }

    static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                   torch::autograd::variable_list grad_outputs) {
        auto saved = ctx->get_saved_variables();
        torch::Tensor g;
        if (!saved.empty() && saved[0].defined()) g = saved[0] * grad_outputs[0];
        return {g, torch::Tensor(), torch::Tensor(), torch::Tensor(), torch::Tensor()};
    }
};

} // namespace

torch::Tensor weighted_ce_loss(const torch::Tensor& logits, const torch::Tensor& mask,
                               std::array<double, 2> class_weights) {
    auto lg = logits.dim() == 3 ? logits.unsqueeze(0) : logits;
    auto m = mask.dim() == 2 ? mask.unsqueeze(0) : mask;
    if (lg.dim() != 4 || lg.size(1) != 2) throw InvalidInput("weighted_ce_loss: logits must be B x 2 x H x W");
    if (m.dim() != 3 || m.size(0) != lg.size(0) || m.size(1) != lg.size(2) || m.size(2) != lg.size(3))
        throw InvalidInput("weighted_ce_loss: mask shape does not match logits");
    check_binary_mask(m);
    const auto target = m.to(torch::kLong);
    const auto log_prob = torch::log_softmax(lg, 1).gather(1, target.unsqueeze(1)).squeeze(1);
    const auto weights = torch::where(target == 1, torch::full({}, class_weights[1], lg.options()),
                                      torch::full({}, class_weights[0], lg.options()));
    const auto per_image = -(weights * log_prob).sum({1, 2}) / weights.sum({1, 2});
    return per_image.mean();
}

torch::Tensor patch_contrastive_loss(const torch::Tensor& projection, const torch::Tensor& mask, int grid,
                                     double temperature, bool sum_over_batch, int* anchors_used) {
    auto p = projection.dim() == 3 ? projection.unsqueeze(0) : projection;
    auto m = mask.dim() == 2 ? mask.unsqueeze(0) : mask;
    if (p.dim() != 4 || m.dim() != 3 || p.size(0) != m.size(0))
        throw InvalidInput("patch_contrastive_loss: expected B x D x h x w projection and B x H x W mask");
    check_binary_mask(m);
    auto outs = PatchSupConFunction::apply(p, m, grid, temperature, sum_over_batch);
    if (anchors_used) *anchors_used = static_cast<int>(outs[1].item<int64_t>());
    return outs[0];
}

LossBreakdown combined_loss(const ModelOutput& output, const torch::Tensor& mask, const LossConfig& cfg) {
    LossBreakdown out;
    auto ce = weighted_ce_loss(output.logits, mask, cfg.ce_weights);
    out.l_ce = ce.item<double>();
    if (!cfg.use_contrastive) {
        out.total = ce;
        out.total_value = out.l_ce;
        return out;
    }
    if (!output.projection)
        throw ContractViolation("combined_loss: model output has no projection map (evaluation-mode forward?)");
    auto con = patch_contrastive_loss(*output.projection, mask, cfg.grid, cfg.temperature, cfg.sum_over_batch,
                                      &out.anchors_used);
    out.l_con = con.item<double>();
    out.total = ce + con;
    out.total_value = out.l_ce + out.l_con;
    return out;
}

} // namespace cflnet
