#include "pman/pmnet/pmnet.hpp"

#include <cmath>

#include "pman/ad/executor.hpp"
#include "pman/error.hpp"
#include "pman/pmnet/blocks.hpp"

namespace pman::pmnet {

void PmnetConfig::validate() const {
    backbone.validate();
    const int s = backbone.total_stride();
    if (input_size < 8 || input_size % s != 0) {
        throw ValidationError("pmnet: input size " + std::to_string(input_size) + " is not a multiple of stride " +
                              std::to_string(s));
    }
    if (num_ids < 1) throw ValidationError("pmnet: need at least one identity");
    if (K < 1) throw ValidationError("pmnet: K must be positive");
    if (global_conv_width < 1 || global_dim < 1 || part_channels < 4 || stream_dim < 1) {
        throw ValidationError("pmnet: layer widths must be positive (part channels at least 4)");
    }
    if (!(margin > 0.0)) throw ValidationError("pmnet: triplet margin must be positive");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ValidationError("pmnet: label smoothing in [0,1)");
    for (double w : fixed_weights)
        if (!(w >= 0.0)) throw ValidationError("pmnet: fixed task weights must be non-negative");
}

TeacherTensors teacher_tensors(std::span<const panet::PartMaskSet> masks, int K, int fh, int fw) {
    TeacherTensors t;
    const std::size_t B = masks.size();
    const std::size_t plane = static_cast<std::size_t>(fh) * fw;
    for (int k = 0; k < K; ++k) {
        ad::Tensor<float> box({B, 4});
        ad::Tensor<float> wt({B, 1, static_cast<std::size_t>(fh), static_cast<std::size_t>(fw)});
        for (std::size_t n = 0; n < B; ++n) {
            const auto& set = masks[n];
            if (set.size() != static_cast<std::size_t>(K)) {
                throw ValidationError("part mask set for '" + set.image_id + "' has " + std::to_string(set.size()) +
                                      " parts, model expects " + std::to_string(K));
            }
            const auto& b = set.feature_boxes[static_cast<std::size_t>(k)];
            box[n * 4 + 0] = static_cast<float>(b.y0);
            box[n * 4 + 1] = static_cast<float>(b.x0);
            box[n * 4 + 2] = static_cast<float>(b.y1);
            box[n * 4 + 3] = static_cast<float>(b.x1);
            const auto w = panet::mask_weight_map(set.masks[static_cast<std::size_t>(k)], fh, fw);
            std::copy(w.begin(), w.end(), wt.values().begin() + static_cast<long>(n * plane));
        }
        t.boxes.push_back(std::move(box));
        t.weights.push_back(std::move(wt));
    }
    return t;
}

Pmnet::Pmnet(const PmnetConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    build(seed);
}

void Pmnet::build(std::uint64_t seed) {
    model::LayerBuilder b(graph_, params_, seed);
    auto& g = graph_;
    const auto& bb = config_.backbone;
    const std::size_t n_stages = bb.widths.size();
    const int C = bb.out_channels();
    const int c_split = n_stages >= 2 ? bb.widths[n_stages - 2] : bb.stem_width;
    const NodeId labels = g.input("labels");

    g.set_scope("backbone");
    const NodeId trunk = model::backbone_trunk(b, g.input("image"), bb, n_stages - 1);

    // global head
    g.set_scope("global");
    NodeId gx = model::res_block(b, trunk, "global.res", c_split, C, 1);
    gx = g.relu(b.bn(b.conv(gx, "global.reduce", C, config_.global_conv_width, 1, 1, 0), "global.reduce_bn",
                     config_.global_conv_width));
    const NodeId f_g = b.linear(student_pool(g, gx), "global.fc", config_.global_conv_width, config_.global_dim);
    const NodeId e_g = b.bn(f_g, "global.neck", config_.global_dim);
    const NodeId logits_g = b.linear(e_g, "global.classifier", config_.global_dim, config_.num_ids, false, 0.001);
    g.mark_output("f_G", f_g);
    g.mark_output("e_G", e_g);

    g.set_scope("loss");
    const NodeId l_g = g.cross_entropy(logits_g, labels, config_.label_smoothing);
    const NodeId tri_g = g.triplet_hard(f_g, labels, config_.margin);
    g.mark_output("L_G", l_g);

    if (config_.global_only) {
        g.mark_output("J_ID", l_g);
        g.mark_output("tri", tri_g);
        g.mark_output("J", g.add(l_g, tri_g));
        g.set_scope("");
        return;
    }

    // part streams
    g.set_scope("part");
    const NodeId px = model::res_block(b, trunk, "part.res", c_split, C, 1);
    const int pc = config_.part_channels, sd = config_.stream_dim;
    std::vector<NodeId> students, teachers;
    NodeId l_pt = -1;
    for (int k = 0; k < config_.K; ++k) {
        const std::string s = "stream" + std::to_string(k);
        g.set_scope(s);
        const NodeId F = g.relu(b.bn(b.conv(px, s + ".reduce", C, pc, 1, 1, 0), s + ".reduce_bn", pc));
        const auto st = mam(b, F, s + ".mam", pc);
        const NodeId smap = g.relu(b.conv(st.out, s + ".embed", pc, sd, 1, 1, 0, 1, true));
        students.push_back(student_pool(g, smap));

        g.set_scope(s + ".teacher");
        const NodeId P = teacher_input(g, F, g.input("wt" + std::to_string(k)), g.input("box" + std::to_string(k)));
        const auto te = mam(b, P, s + ".mam", pc);
        const NodeId tmap = g.relu(b.conv(te.out, s + ".embed", pc, sd, 1, 1, 0, 1, true));
        teachers.push_back(teacher_pool(g, tmap));

        g.mark_output(s + ".F", F);
        g.mark_output(s + ".attended", st.out);
        g.mark_output(s + ".spatial", st.spatial);
        g.mark_output(s + ".student_map", smap);
        g.mark_output(s + ".teacher_map", tmap);
        g.set_scope("loss");
        const NodeId pt = g.part_transfer(smap, tmap, config_.squared_transfer);
        l_pt = k == 0 ? pt : g.add(l_pt, pt);
    }

    g.set_scope("heads");
    const int dim = config_.K * sd;
    const NodeId f_s = g.concat(students, 1);
    const NodeId f_t = g.concat(teachers, 1);
    const NodeId e_s = b.bn(f_s, "student.neck", dim);
    const NodeId e_t = b.bn(f_t, "teacher.neck", dim);
    const NodeId logits_s = b.linear(e_s, "student.classifier", dim, config_.num_ids, false, 0.001);
    const NodeId logits_t = b.linear(e_t, "teacher.classifier", dim, config_.num_ids, false, 0.001);
    g.mark_output("f_S", f_s);
    g.mark_output("f_T", f_t);
    g.mark_output("e_S", e_s);
    g.mark_output("e_T", e_t);

    g.set_scope("loss");
    const NodeId l_s = g.cross_entropy(logits_s, labels, config_.label_smoothing);
    const NodeId l_t = g.cross_entropy(logits_t, labels, config_.label_smoothing);
    const NodeId tri = g.scale(g.add(g.add(tri_g, g.triplet_hard(f_s, labels, config_.margin)),
                                     g.triplet_hard(f_t, labels, config_.margin)),
                               1.0 / 3.0);
    NodeId j_id;
    if (config_.weighting == Weighting::Hul) {
        j_id = g.hul_combine(l_g, l_s, l_t, b.param(kHulParam, {3}, 0.0, 0.0));
    } else {
        const auto& w = config_.fixed_weights;
        j_id = g.add(g.add(g.scale(l_g, w[0]), g.scale(l_s, w[1])), g.scale(l_t, w[2]));
    }
    g.mark_output("L_S", l_s);
    g.mark_output("L_T", l_t);
    g.mark_output("L_PT", l_pt);
    g.mark_output("tri", tri);
    g.mark_output("J_ID", j_id);
    g.mark_output("J", g.add(g.add(j_id, tri), l_pt));
    g.set_scope("");
}

FeatureBundle Pmnet::infer(std::span<const vision::RgbImage> images,
                           std::optional<std::span<const panet::PartMaskSet>> masks) const {
    if (masks && config_.global_only) throw ValidationError("pmnet: global-only model has no teachers");
    if (masks && masks->size() != images.size()) {
        throw ValidationError("pmnet: " + std::to_string(masks->size()) + " mask sets for " +
                              std::to_string(images.size()) + " images");
    }
    for (const auto& img : images) {
        if (img.width != config_.input_size || img.height != config_.input_size) {
            throw ValidationError("pmnet: expected " + std::to_string(config_.input_size) + "x" +
                                  std::to_string(config_.input_size) + " input, got " + std::to_string(img.width) +
                                  "x" + std::to_string(img.height));
        }
    }
    auto params = params_;
    ad::Executor<float> ex(graph_, params, ad::Mode::Eval);
    std::vector<std::string> outs{"e_G"};
    if (!config_.global_only) outs.push_back("e_S");
    if (masks) outs.push_back("e_T");

    const std::size_t N = images.size(), chunk = 64;
    std::map<std::string, std::vector<float>> acc;
    std::map<std::string, std::size_t> dims;
    const int fs = config_.feature_size();
    for (std::size_t start = 0; start < N; start += chunk) {
        const std::size_t n = std::min(chunk, N - start);
        std::map<std::string, ad::Tensor<float>> in{{"image", model::images_to_tensor(images.subspan(start, n))}};
        if (masks) {
            auto tt = teacher_tensors(masks->subspan(start, n), config_.K, fs, fs);
            for (int k = 0; k < config_.K; ++k) {
                in["box" + std::to_string(k)] = std::move(tt.boxes[static_cast<std::size_t>(k)]);
                in["wt" + std::to_string(k)] = std::move(tt.weights[static_cast<std::size_t>(k)]);
            }
        }
        const auto out = ex.forward(in, outs);
        for (const auto& name : outs) {
            const auto& t = out.at(name);
            dims[name] = t.dim(1);
            acc[name].insert(acc[name].end(), t.values().begin(), t.values().end());
        }
    }
    auto take = [&](const std::string& name) {
        return ad::Tensor<float>({N, dims.at(name)}, std::move(acc.at(name)));
    };
    FeatureBundle fb;
    fb.f_g = take("e_G");
    fb.f_s = config_.global_only ? ad::Tensor<float>({N, 0}) : take("e_S");
    if (masks) fb.f_t = take("e_T");
    return fb;
}

std::array<double, 3> Pmnet::task_weights() const {
    if (config_.global_only) return {1.0, 0.0, 0.0};
    if (config_.weighting == Weighting::Fixed) return config_.fixed_weights;
    const auto& s = params_.get(kHulParam);
    return {std::exp(-static_cast<double>(s[0])), std::exp(-static_cast<double>(s[1])),
            std::exp(-static_cast<double>(s[2]))};
}

namespace {
ad::Tensor<float> vec(const std::vector<double>& v) {
    ad::Tensor<float> t({v.size()});
    for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(v[i]);
    return t;
}
std::vector<int> ints(const ad::TensorMap& m, const std::string& k) {
    auto it = m.find(k);
    if (it == m.end()) throw ValidationError("checkpoint is missing '" + k + "'");
    std::vector<int> v;
    for (float x : it->second.values()) v.push_back(static_cast<int>(std::lround(x)));
    return v;
}
std::vector<double> reals(const ad::TensorMap& m, const std::string& k) {
    auto it = m.find(k);
    if (it == m.end()) throw ValidationError("checkpoint is missing '" + k + "'");
    return {it->second.values().begin(), it->second.values().end()};
}
std::vector<double> as_d(const std::vector<int>& v) { return {v.begin(), v.end()}; }
}  // namespace

ad::TensorMap Pmnet::to_tensor_map() const {
    const auto& c = config_;
    auto m = ad::to_tensor_map(params_);
    m["meta:model"] = vec({2});
    m["meta:input_size"] = vec({static_cast<double>(c.input_size)});
    m["meta:stem"] = vec({static_cast<double>(c.backbone.stem_width), static_cast<double>(c.backbone.stem_stride)});
    m["meta:widths"] = vec(as_d(c.backbone.widths));
    m["meta:strides"] = vec(as_d(c.backbone.strides));
    m["meta:num_ids"] = vec({static_cast<double>(c.num_ids)});
    m["meta:K"] = vec({static_cast<double>(c.K)});
    m["meta:dims"] = vec({static_cast<double>(c.global_conv_width), static_cast<double>(c.global_dim),
                          static_cast<double>(c.part_channels), static_cast<double>(c.stream_dim)});
    m["meta:margin"] = vec({c.margin});
    m["meta:label_smoothing"] = vec({c.label_smoothing});
    m["meta:flags"] = vec({c.squared_transfer ? 1.0 : 0.0, c.weighting == Weighting::Hul ? 1.0 : 0.0,
                           c.global_only ? 1.0 : 0.0});
    m["meta:fixed_weights"] = vec({c.fixed_weights[0], c.fixed_weights[1], c.fixed_weights[2]});
    const auto w = task_weights();
    m["meta:task_weights"] = vec({w[0], w[1], w[2]});
    return m;
}

Pmnet Pmnet::from_tensor_map(const ad::TensorMap& m) {
    if (ints(m, "meta:model") != std::vector<int>{2}) throw ValidationError("checkpoint is not a PMNet");
    PmnetConfig c;
    c.input_size = ints(m, "meta:input_size").at(0);
    const auto stem = ints(m, "meta:stem");
    c.backbone.stem_width = stem.at(0);
    c.backbone.stem_stride = stem.at(1);
    c.backbone.widths = ints(m, "meta:widths");
    c.backbone.strides = ints(m, "meta:strides");
    c.num_ids = ints(m, "meta:num_ids").at(0);
    c.K = ints(m, "meta:K").at(0);
    const auto d = ints(m, "meta:dims");
    c.global_conv_width = d.at(0);
    c.global_dim = d.at(1);
    c.part_channels = d.at(2);
    c.stream_dim = d.at(3);
    c.margin = static_cast<float>(reals(m, "meta:margin").at(0));
    c.label_smoothing = static_cast<float>(reals(m, "meta:label_smoothing").at(0));
    const auto f = ints(m, "meta:flags");
    c.squared_transfer = f.at(0) != 0;
    c.weighting = f.at(1) != 0 ? Weighting::Hul : Weighting::Fixed;
    c.global_only = f.at(2) != 0;
    const auto fw = reals(m, "meta:fixed_weights");
    c.fixed_weights = {fw.at(0), fw.at(1), fw.at(2)};
    Pmnet p(c, 0);
    ad::load_into(p.params_, m);
    return p;
}

}  // namespace pman::pmnet
