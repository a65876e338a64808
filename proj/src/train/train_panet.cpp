#include "pman/train/train_panet.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "pman/ad/adam.hpp"
#include "pman/ad/executor.hpp"
#include "pman/error.hpp"

namespace pman::train {

void PanetTrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("panet training: epochs must be positive");
    if (batch_size < 2) throw ValidationError("panet training: batch size must be at least 2");
    if (!(lr > 0.0)) throw ValidationError("panet training: learning rate must be positive");
    if (warmup_fraction < 0.0 || warmup_fraction > 1.0) throw ValidationError("panet training: warm-up in [0,1]");
    if (flip < 0.0 || flip > 1.0) throw ValidationError("panet training: flip probability in [0,1]");
}

ad::Tensor<float> masks_to_tensor(std::span<const vision::BinaryMask> masks) {
    if (masks.empty()) throw ValidationError("no masks");
    const auto W = static_cast<std::size_t>(masks[0].width), H = static_cast<std::size_t>(masks[0].height);
    ad::Tensor<float> t({masks.size(), 1, H, W});
    for (std::size_t n = 0; n < masks.size(); ++n) {
        if (masks[n].width != masks[0].width || masks[n].height != masks[0].height) {
            throw ValidationError("masks differ in size");
        }
        for (std::size_t i = 0; i < H * W; ++i) t[n * H * W + i] = static_cast<float>(masks[n].bits[i]);
    }
    return t;
}

std::vector<PanetLogRow> train_panet(panet::Panet& model, const TrainingSet& data,
                                     std::span<const vision::BinaryMask> pseudo, const PanetTrainConfig& config,
                                     const std::function<void(const PanetLogRow&)>& on_step) {
    config.validate();
    data.validate();
    if (pseudo.size() != data.size()) {
        throw ValidationError("panet training: " + std::to_string(data.size()) + " images but " +
                              std::to_string(pseudo.size()) + " pseudo masks");
    }
    if (data.num_classes > model.config().num_ids) {
        throw ValidationError("panet training: " + std::to_string(data.num_classes) + " identities, model has " +
                              std::to_string(model.config().num_ids));
    }
    const std::size_t B = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), data.size());
    const std::size_t per_epoch = (data.size() + B - 1) / B;
    const std::size_t total = per_epoch * static_cast<std::size_t>(config.epochs);

    ad::Adam adam({0.9, 0.999, 1e-8, config.weight_decay});
    std::mt19937_64 rng(mix_seed(config.seed, 0x70616e6574ULL));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<PanetLogRow> log;
    std::size_t step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += B) {
            // last batch wraps around to full size
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < B; ++i) idx.push_back(order[(start + i) % order.size()]);
            std::vector<vision::RgbImage> imgs;
            std::vector<vision::BinaryMask> masks;
            std::vector<int> labels;
            std::uniform_real_distribution<double> u(0.0, 1.0);
            for (auto i : idx) {
                const bool flip = u(rng) < config.flip;
                imgs.push_back(flip ? vision::flip_horizontal(data.images[i]) : data.images[i]);
                masks.push_back(flip ? vision::flip_horizontal(pseudo[i]) : pseudo[i]);
                labels.push_back(data.labels[i]);
            }
            ad::Executor<float> ex(model.graph(), model.params(), ad::Mode::Train);
            const auto out = ex.forward({{"image", model::images_to_tensor(imgs)},
                                         {"labels", label_tensor(labels)},
                                         {"pseudo", masks_to_tensor(masks)}},
                                        {"loss", "loss_id", "loss_seg"});
            ex.backward("loss");
            const double lr = warmup_lr(config.lr, step, total, config.warmup_fraction);
            adam.step(model.params(), ex.param_grads(), lr);
            PanetLogRow row{step, out.at("loss")[0], out.at("loss_id")[0], out.at("loss_seg")[0], lr};
            log.push_back(row);
            if (on_step) on_step(row);
            ++step;
        }
    }
    return log;
}

}  // namespace pman::train
