#include "pman/pipeline/commands.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "pman/ad/checkpoint.hpp"
#include "pman/ad/executor.hpp"
#include "pman/error.hpp"
#include "pman/eval/evaluate.hpp"
#include "pman/pipeline/synthetic.hpp"
#include "pman/train/augment.hpp"
#include "pman/train/train_panet.hpp"
#include "pman/train/train_pmnet.hpp"
#include "pman/vision/grabcut.hpp"
#include "pman/vision/png_io.hpp"

namespace pman::pipeline {

namespace fs = std::filesystem;

namespace {

std::string grabcut_stamp(const GrabCutSettings& s) {
    std::ostringstream o;
    o.precision(17);
    o << "iters " << s.options.iters << "\ncomponents " << s.options.components << "\nlambda " << s.options.lambda
      << "\ngmm_iters " << s.options.gmm_iters << "\nmargin " << s.margin << "\n";
    return o.str();
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

constexpr std::size_t kChunk = 32;

template <typename F>
void for_chunks(std::size_t n, F&& f) {
    for (std::size_t start = 0; start < n; start += kChunk) f(start, std::min(kChunk, n - start));
}

}  // namespace

std::vector<vision::BinaryMask> pseudo_labels(const Dataset& data, const GrabCutSettings& settings,
                                              std::ostream* progress) {
    const fs::path dir = data.root / "pseudo";
    const auto stamp = grabcut_stamp(settings);
    bool cached = fs::exists(dir / "settings.txt") && read_text(dir / "settings.txt") == stamp;
    for (const auto& s : data.train)
        if (cached && !fs::exists(dir / (s.name + ".png"))) cached = false;
    std::vector<vision::BinaryMask> out;
    if (cached) {
        for (const auto& s : data.train) out.push_back(vision::read_mask_png(dir / (s.name + ".png")));
        if (progress) *progress << "pseudo labels: " << out.size() << " cached\n";
        return out;
    }
    fs::create_directories(dir);
    fs::remove(dir / "settings.txt");
    for (std::size_t i = 0; i < data.train.size(); ++i) {
        const auto img = vision::read_png(data.path_of(data.train[i]));
        const auto rect = vision::shrunk_bounds(img.width, img.height, settings.margin);
        const auto r = vision::grabcut_trace(img, rect, model::fnv1a(data.train[i].name), settings.options);
        vision::write_mask_png(dir / (data.train[i].name + ".png"), r.mask);
        out.push_back(r.mask);
    }
    std::ofstream(dir / "settings.txt") << stamp;
    if (progress) *progress << "pseudo labels: " << out.size() << " computed\n";
    return out;
}

std::vector<panet::PartEvidence> part_evidence_for(const panet::Panet& model, std::span<const vision::RgbImage> images,
                                                   int K, double threshold, EvidenceStats* stats) {
    std::vector<panet::PartEvidence> out;
    EvidenceStats st;
    panet::PartMaskOptions opt;
    opt.K = K;
    opt.rel_threshold = threshold;
    for_chunks(images.size(), [&](std::size_t start, std::size_t n) {
        const auto res = model.infer(images.subspan(start, n));
        const int C = static_cast<int>(res.xhat.dim(1)), h = static_cast<int>(res.xhat.dim(2)),
                  w = static_cast<int>(res.xhat.dim(3));
        const std::size_t per = static_cast<std::size_t>(C) * h * w;
        for (std::size_t i = 0; i < n; ++i) {
            const auto fg = panet::refined_foreground(res.seg, i);
            const std::span<const float> xhat(res.xhat.values().data() + i * per, per);
            try {
                out.push_back(panet::part_evidence(xhat, C, h, w, fg, opt));
            } catch (const InsufficientEvidence&) {
                out.push_back(panet::band_evidence(fg, K, h, w));
                ++st.band_fallbacks;
            }
            if (out.back().foreground_fallback) ++st.foreground_fallbacks;
            ++st.images;
        }
    });
    if (stats) *stats = st;
    return out;
}

std::vector<panet::PartMaskSet> inference_masks(const panet::Panet& model, std::span<const vision::RgbImage> images,
                                                int K, double threshold) {
    std::vector<panet::PartMaskSet> out;
    for (const auto& ev : part_evidence_for(model, images, K, threshold)) out.push_back(panet::select_part_masks(ev));
    return out;
}

void cmd_gen_data(const RunConfig& config, const fs::path& out, bool force) {
    write_synthetic_dataset(config.synthetic, out, force);
}

panet::Panet cmd_train_panet(const RunConfig& config, const fs::path& data_dir, const fs::path& out,
                             std::ostream* progress) {
    const auto data = load_dataset(data_dir);
    const auto set = training_set(data);
    const auto pseudo = pseudo_labels(data, config.grabcut, progress);
    auto pc = config.panet;
    pc.backbone = config.backbone;
    pc.input_size = set.images.front().width;
    pc.num_ids = set.num_classes;
    panet::Panet model(pc, config.panet_training.seed);
    train::train_panet(model, set, pseudo, config.panet_training, [&](const train::PanetLogRow& r) {
        if (progress && (r.step % 20 == 0)) {
            *progress << "panet step " << r.step << " loss " << r.loss << " (id " << r.loss_id << ", seg "
                      << r.loss_seg << ")\n";
        }
    });
    ad::save_checkpoint(out, model.to_tensor_map());
    return model;
}

EvidenceStats cmd_gen_masks(const fs::path& panet_ckpt, const fs::path& data_dir, const fs::path& out, int K,
                            double threshold) {
    const auto model = panet::Panet::from_tensor_map(ad::load_checkpoint(panet_ckpt));
    const auto data = load_dataset(data_dir);
    std::vector<Sample> all = data.train;
    all.insert(all.end(), data.query.begin(), data.query.end());
    all.insert(all.end(), data.gallery.begin(), data.gallery.end());
    const auto images = data.load_images(all);
    EvidenceStats stats;
    const auto evidence = part_evidence_for(model, images, K, threshold, &stats);
    fs::create_directories(out);
    static const std::uint8_t tint[3][3] = {{255, 64, 64}, {64, 255, 64}, {64, 64, 255}};
    for (std::size_t i = 0; i < all.size(); ++i) {
        auto set = panet::select_part_masks(evidence[i]);
        set.image_id = all[i].name;
        panet::write_part_masks(out, set);
        auto overlay = images[i];
        for (std::size_t k = 0; k < set.size(); ++k)
            for (int y = 0; y < overlay.height; ++y)
                for (int x = 0; x < overlay.width; ++x)
                    if (set.masks[k].at(x, y))
                        for (int c = 0; c < 3; ++c)
                            overlay.at(x, y, c) = static_cast<std::uint8_t>((overlay.at(x, y, c) + tint[k % 3][c]) / 2);
        vision::write_png(out / (all[i].name + "_overlay.png"), overlay);
    }
    return stats;
}

pmnet::Pmnet cmd_train_pmnet(const RunConfig& config, const fs::path& data_dir,
                             const std::optional<fs::path>& panet_ckpt, const fs::path& out, std::ostream* progress) {
    const auto data = load_dataset(data_dir);
    const auto set = training_set(data);
    auto mc = config.pmnet;
    mc.backbone = config.backbone;
    mc.input_size = set.images.front().width;
    mc.num_ids = set.num_classes;
    std::vector<panet::PartEvidence> evidence;
    if (!mc.global_only) {
        if (!panet_ckpt) throw ValidationError("train-pmnet: a PANet checkpoint is required for part streams");
        const auto pa = panet::Panet::from_tensor_map(ad::load_checkpoint(*panet_ckpt));
        if (pa.config().feature_size() != mc.feature_size()) {
            throw ValidationError("train-pmnet: PANet and PMNet feature maps differ in size");
        }
        EvidenceStats stats;
        evidence = part_evidence_for(pa, set.images, mc.K, config.mask_threshold, &stats);
        if (progress) {
            *progress << "part evidence: " << stats.images << " images, " << stats.band_fallbacks
                      << " band fallbacks, " << stats.foreground_fallbacks << " empty foregrounds\n";
        }
    }
    pmnet::Pmnet model(mc, config.training.seed);
    const auto log = train::train_pmnet(model, set, evidence, config.training, [&](const train::PmnetLogRow& r) {
        if (progress && (r.step % 20 == 0)) {
            *progress << "pmnet step " << r.step << " J " << r.J << " (id " << r.J_ID << ", tri " << r.J_Tri
                      << ", pt " << r.L_PT << ")\n";
        }
    });
    ad::save_checkpoint(out, model.to_tensor_map());
    train::write_pmnet_log(fs::path(out.string() + ".log.csv"), log);
    return model;
}

eval::EvalReport cmd_eval(const EvalRequest& req) {
    const auto model = pmnet::Pmnet::from_tensor_map(ad::load_checkpoint(req.pmnet));
    const auto& mc = model.config();
    const bool teachers = req.teachers && !mc.global_only;
    std::optional<panet::Panet> pa;
    if (teachers) {
        if (!req.panet) throw ValidationError("eval: --mode full needs a PANet checkpoint (--panet)");
        pa = panet::Panet::from_tensor_map(ad::load_checkpoint(*req.panet));
    }
    const auto data = load_dataset(req.data);
    if (data.query.empty() || data.gallery.empty()) throw ValidationError("eval: empty query or gallery split");
    auto q_imgs = data.load_images(data.query);
    const auto g_imgs = data.load_images(data.gallery);
    if (req.occluded_queries) {
        for (std::size_t i = 0; i < q_imgs.size(); ++i) {
            q_imgs[i] = train::occlusion_augment(q_imgs[i], 1.0, train::mix_seed(req.config.eval.seed, 0x6f63, i));
        }
    }

    auto features = [&](const std::vector<vision::RgbImage>& imgs) {
        if (!teachers) return model.infer(imgs);
        const auto masks = inference_masks(*pa, imgs, mc.K, req.config.mask_threshold);
        return model.infer(imgs, masks);
    };
    const auto fq = features(q_imgs);
    const auto fg = features(g_imgs);
    auto lambda = req.config.eval.lambda.value_or(model.task_weights());
    if (!teachers) lambda[2] = 0.0;

    eval::EvalReport rep;
    if (req.config.eval.protocol == EvalSettings::Protocol::Veri) {
        eval::Relevance rel;
        for (const auto& s : data.query) {
            rel.query_ids.push_back(s.identity);
            rel.query_cams.push_back(s.camera);
            rel.query_names.push_back(s.name);
        }
        for (const auto& s : data.gallery) {
            rel.gallery_ids.push_back(s.identity);
            rel.gallery_cams.push_back(s.camera);
            rel.gallery_names.push_back(s.name);
        }
        rep = eval::evaluate(fq, fg, rel, lambda);
    } else {
        pmnet::FeatureBundle all;
        auto cat = [](const ad::Tensor<float>& a, const ad::Tensor<float>& b) {
            ad::Tensor<float> t({a.dim(0) + b.dim(0), a.dim(1)});
            std::copy(a.values().begin(), a.values().end(), t.values().begin());
            std::copy(b.values().begin(), b.values().end(), t.values().begin() + static_cast<long>(a.numel()));
            return t;
        };
        all.f_g = cat(fq.f_g, fg.f_g);
        all.f_s = cat(fq.f_s, fg.f_s);
        if (fq.f_t && fg.f_t) all.f_t = cat(*fq.f_t, *fg.f_t);
        std::vector<int> ids;
        for (const auto& s : data.query) ids.push_back(s.identity);
        for (const auto& s : data.gallery) ids.push_back(s.identity);
        rep = eval::evaluate_vehicleid(all, ids, lambda, req.config.eval.repeats, req.config.eval.seed);
    }
    if (req.report) rep.write_csv(*req.report);
    return rep;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const InsufficientEvidence*>(&e)) return 1;
    return 2;
}

void cmd_visualize(const fs::path& pmnet_ckpt, const fs::path& image, const fs::path& out) {
    const auto model = pmnet::Pmnet::from_tensor_map(ad::load_checkpoint(pmnet_ckpt));
    const auto& mc = model.config();
    if (mc.global_only) throw ValidationError("visualize: the model has no part streams");
    const auto img = vision::read_png(image);
    if (img.width != mc.input_size || img.height != mc.input_size) {
        throw ValidationError("visualize: expected a " + std::to_string(mc.input_size) + "x" +
                              std::to_string(mc.input_size) + " image");
    }
    std::vector<std::string> outs;
    for (int k = 0; k < mc.K; ++k) {
        const std::string s = "stream" + std::to_string(k);
        outs.insert(outs.end(), {s + ".F", s + ".attended", s + ".spatial"});
    }
    auto params = model.params();
    ad::Executor<float> ex(model.graph(), params, ad::Mode::Eval);
    const std::vector<vision::RgbImage> batch{img};
    const auto res = ex.forward({{"image", model::images_to_tensor(batch)}}, outs);
    fs::create_directories(out);
    auto channel_mean = [](const ad::Tensor<float>& t) {
        const std::size_t C = t.dim(1), plane = t.dim(2) * t.dim(3);
        std::vector<float> m(plane, 0.0f);
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < plane; ++i) m[i] += t[c * plane + i] / static_cast<float>(C);
        return m;
    };
    const std::string stem = image.stem().string();
    for (int k = 0; k < mc.K; ++k) {
        const std::string s = "stream" + std::to_string(k);
        const auto& F = res.at(s + ".F");
        const int h = static_cast<int>(F.dim(2)), w = static_cast<int>(F.dim(3));
        vision::write_heatmap_png(out / (stem + "_" + s + "_before.png"), channel_mean(F), w, h);
        vision::write_heatmap_png(out / (stem + "_" + s + "_after.png"), channel_mean(res.at(s + ".attended")), w, h);
        const auto& sp = res.at(s + ".spatial");
        vision::write_heatmap_png(out / (stem + "_" + s + "_spatial.png"), sp.values(), w, h);
    }
}

}  // namespace pman::pipeline
