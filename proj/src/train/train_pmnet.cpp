#include "pman/train/train_pmnet.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "pman/ad/adam.hpp"
#include "pman/ad/executor.hpp"
#include "pman/error.hpp"
#include "pman/train/sampler.hpp"

namespace pman::train {

void PmnetTrainConfig::validate() const {
    if (P < 2) throw ValidationError("pmnet training: P must be at least 2 (triplet negatives)");
    if (Q < 1) throw ValidationError("pmnet training: Q must be positive");
    if (epochs < 1) throw ValidationError("pmnet training: epochs must be positive");
    if (!(lr > 0.0)) throw ValidationError("pmnet training: learning rate must be positive");
    if (warmup_fraction < 0.0 || warmup_fraction > 1.0) throw ValidationError("pmnet training: warm-up in [0,1]");
    augment.validate();
}

std::size_t pmnet_total_steps(const PmnetTrainConfig& c, std::size_t n) {
    const auto B = static_cast<std::size_t>(c.P * c.Q);
    return static_cast<std::size_t>(c.epochs) * ((n + B - 1) / B);
}

std::vector<PmnetLogRow> train_pmnet(pmnet::Pmnet& model, const TrainingSet& data,
                                     std::span<const panet::PartEvidence> evidence, const PmnetTrainConfig& config,
                                     const std::function<void(const PmnetLogRow&)>& on_step) {
    config.validate();
    data.validate();
    const auto& mc = model.config();
    const bool parts = !mc.global_only;
    if (parts && evidence.size() != data.size()) {
        throw ValidationError("pmnet training: " + std::to_string(data.size()) + " images but part evidence for " +
                              std::to_string(evidence.size()));
    }
    if (data.num_classes > mc.num_ids) {
        throw ValidationError("pmnet training: " + std::to_string(data.num_classes) + " identities, model has " +
                              std::to_string(mc.num_ids));
    }
    const int fs = mc.feature_size();
    if (parts) {
        for (const auto& ev : evidence) {
            if (ev.K != mc.K || ev.feat_h != fs || ev.feat_w != fs) {
                throw ValidationError("pmnet training: part evidence does not match K=" + std::to_string(mc.K) +
                                      " on a " + std::to_string(fs) + "x" + std::to_string(fs) + " feature map");
            }
        }
    }

    PqSampler sampler(data.labels, config.P, config.Q, mix_seed(config.seed, 1));
    const std::size_t total = pmnet_total_steps(config, data.size());
    ad::Adam adam({0.9, 0.999, 1e-8, config.weight_decay});
    std::vector<std::string> outs{"J", "J_ID", "tri"};
    if (parts) outs.push_back("L_PT");

    std::vector<PmnetLogRow> log;
    for (std::size_t step = 0; step < total; ++step) {
        const auto idx = sampler.next_batch();
        std::vector<vision::RgbImage> imgs;
        std::vector<panet::PartMaskSet> masks;
        std::vector<int> labels;
        for (std::size_t slot = 0; slot < idx.size(); ++slot) {
            const auto i = idx[slot];
            auto a = augment(data.images[i], config.augment, mix_seed(config.seed, 2 + step, slot));
            if (parts) {
                auto set = panet::sample_part_masks(evidence[i], mix_seed(config.seed, 0x100000000ULL + step, slot));
                masks.push_back(a.flipped ? panet::flip_part_masks(set, fs) : std::move(set));
            }
            imgs.push_back(std::move(a.image));
            labels.push_back(data.labels[i]);
        }
        std::map<std::string, ad::Tensor<float>> in{{"image", model::images_to_tensor(imgs)},
                                                    {"labels", label_tensor(labels)}};
        if (parts) {
            auto tt = pmnet::teacher_tensors(masks, mc.K, fs, fs);
            for (int k = 0; k < mc.K; ++k) {
                in["box" + std::to_string(k)] = std::move(tt.boxes[static_cast<std::size_t>(k)]);
                in["wt" + std::to_string(k)] = std::move(tt.weights[static_cast<std::size_t>(k)]);
            }
        }
        ad::Executor<float> ex(model.graph(), model.params(), ad::Mode::Train);
        const auto out = ex.forward(in, outs);
        ex.backward("J");
        const double lr = warmup_lr(config.lr, step, total, config.warmup_fraction);
        adam.step(model.params(), ex.param_grads(), lr);

        PmnetLogRow row;
        row.step = step;
        row.J = out.at("J")[0];
        row.J_ID = out.at("J_ID")[0];
        row.J_Tri = out.at("tri")[0];
        row.L_PT = parts ? out.at("L_PT")[0] : 0.0;
        const auto w = model.task_weights();
        for (int j = 0; j < 3; ++j) row.sigma2[j] = w[j] > 0.0 ? 1.0 / w[j] : 0.0;
        row.lr = lr;
        log.push_back(row);
        if (on_step) on_step(row);
    }
    return log;
}

void write_pmnet_log(const std::filesystem::path& path, std::span<const PmnetLogRow> rows) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write training log " + path.string());
    out << "step,J,J_ID,J_Tri,L_PT,sigma2_G,sigma2_S,sigma2_T,lr\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6g\n", r.step, r.J, r.J_ID, r.J_Tri,
                      r.L_PT, r.sigma2[0], r.sigma2[1], r.sigma2[2], r.lr);
        out << buf;
    }
}

}  // namespace pman::train
