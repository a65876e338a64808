#include "pman/pipeline/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pman/error.hpp"

namespace pman::pipeline {

void SyntheticSpec::validate() const {
    if (identities < 2) throw ValidationError("synthetic: need at least 2 identities");
    if (images_per_identity < 3) throw ValidationError("synthetic: need at least 3 images per identity");
    if (cameras < 2) throw ValidationError("synthetic: need at least 2 cameras");
    if (image_size < 32) throw ValidationError("synthetic: image size must be at least 32");
    if (clutter < 0.0 || clutter > 1.0) throw ValidationError("synthetic: clutter must be in [0,1]");
    if (scale_jitter < 0.0 || scale_jitter > 0.3) throw ValidationError("synthetic: scale jitter must be in [0,0.3]");
    if (shift_jitter < 0.0 || shift_jitter > 0.1) throw ValidationError("synthetic: shift jitter must be in [0,0.1]");
    if (illumination_jitter < 0.0 || illumination_jitter > 0.5) {
        throw ValidationError("synthetic: illumination jitter must be in [0,0.5]");
    }
    if (noise < 0.0 || noise > 50.0) throw ValidationError("synthetic: noise must be in [0,50]");
    if (images_per_identity - 2 * held_out_per_identity() < 1) {
        throw ValidationError("synthetic: no training images left after the query/gallery split");
    }
}

void RunConfig::validate() const {
    synthetic.validate();
    backbone.validate();
    panet_training.validate();
    training.validate();
    if (grabcut.options.iters < 1 || grabcut.options.components < 1 || grabcut.options.gmm_iters < 1 ||
        !(grabcut.options.lambda >= 0.0)) {
        throw ValidationError("grabcut: iterations and components must be positive, lambda non-negative");
    }
    if (grabcut.margin < 0.0 || grabcut.margin >= 0.5) throw ValidationError("grabcut: margin must be in [0,0.5)");
    if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) throw ValidationError("panet: part_threshold in (0,1)");
    if (panet.label_smoothing < 0.0 || panet.label_smoothing >= 1.0) {
        throw ValidationError("panet: label smoothing must be in [0,1)");
    }
    auto p = pmnet;
    p.backbone = backbone;
    p.input_size = synthetic.image_size;
    p.validate();
    if (eval.repeats < 1) throw ValidationError("eval: repeats must be positive");
    if (eval.lambda)
        for (double v : *eval.lambda)
            if (!(v >= 0.0)) throw ValidationError("eval: lambda values must be non-negative");
}

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* expect) {
    throw ValidationError("config: " + key + " = '" + value + "' is not " + expect);
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return {};
    return s.substr(a, s.find_last_not_of(" \t") - a + 1);
}

long long parse_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end) bad(key, v, "an integer");
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end || !std::isfinite(out)) bad(key, v, "a finite number");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad(key, v, "a boolean");
}

std::vector<std::string> split(const std::string& v) {
    std::vector<std::string> parts;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(trim(item));
    return parts;
}

std::string fmt_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Field {
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

class Binder {
public:
    using Section = std::vector<std::pair<std::string, Field>>;
    std::vector<std::pair<std::string, Section>> sections;

    Section& section(const std::string& name) {
        sections.push_back({name, {}});
        return sections.back().second;
    }

    static void integer(Section& s, const std::string& key, int& ref, const std::string& sec) {
        s.push_back({key, {[&ref, k = sec + "." + key](const std::string& v) {
                               const auto x = parse_int(k, v);
                               if (x < INT32_MIN || x > INT32_MAX) bad(k, v, "a 32-bit integer");
                               ref = static_cast<int>(x);
                           },
                           [&ref] { return std::to_string(ref); }}});
    }
    static void u64(Section& s, const std::string& key, std::uint64_t& ref, const std::string& sec) {
        s.push_back({key, {[&ref, k = sec + "." + key](const std::string& v) {
                               const auto x = parse_int(k, v);
                               if (x < 0) bad(k, v, "a non-negative integer");
                               ref = static_cast<std::uint64_t>(x);
                           },
                           [&ref] { return std::to_string(ref); }}});
    }
    static void real(Section& s, const std::string& key, double& ref, const std::string& sec) {
        s.push_back({key, {[&ref, k = sec + "." + key](const std::string& v) { ref = parse_real(k, v); },
                           [&ref] { return fmt_real(ref); }}});
    }
    static void boolean(Section& s, const std::string& key, bool& ref, const std::string& sec) {
        s.push_back({key, {[&ref, k = sec + "." + key](const std::string& v) { ref = parse_bool(k, v); },
                           [&ref] { return std::string(ref ? "true" : "false"); }}});
    }
    static void int_list(Section& s, const std::string& key, std::vector<int>& ref, const std::string& sec) {
        s.push_back({key, {[&ref, k = sec + "." + key](const std::string& v) {
                               std::vector<int> out;
                               for (const auto& p : split(v)) out.push_back(static_cast<int>(parse_int(k, p)));
                               if (out.empty()) bad(k, v, "a non-empty list");
                               ref = out;
                           },
                           [&ref] {
                               std::string out;
                               for (std::size_t i = 0; i < ref.size(); ++i)
                                   out += (i ? "," : "") + std::to_string(ref[i]);
                               return out;
                           }}});
    }
    static void triple(Section& s, const std::string& key, std::array<double, 3>& ref, const std::string& sec) {
        s.push_back({key, {[&ref, k = sec + "." + key](const std::string& v) {
                               const auto parts = split(v);
                               if (parts.size() != 3) bad(k, v, "three comma-separated numbers");
                               for (int i = 0; i < 3; ++i) ref[i] = parse_real(k, parts[i]);
                           },
                           [&ref] { return fmt_real(ref[0]) + "," + fmt_real(ref[1]) + "," + fmt_real(ref[2]); }}});
    }
};

Binder bind(RunConfig& c) {
    Binder b;
    {
        const std::string n = "synthetic";
        auto& s = b.section(n);
        Binder::integer(s, "identities", c.synthetic.identities, n);
        Binder::integer(s, "images_per_identity", c.synthetic.images_per_identity, n);
        Binder::integer(s, "image_size", c.synthetic.image_size, n);
        Binder::integer(s, "cameras", c.synthetic.cameras, n);
        Binder::real(s, "clutter", c.synthetic.clutter, n);
        Binder::real(s, "scale_jitter", c.synthetic.scale_jitter, n);
        Binder::real(s, "shift_jitter", c.synthetic.shift_jitter, n);
        Binder::boolean(s, "flip", c.synthetic.flip, n);
        Binder::real(s, "illumination_jitter", c.synthetic.illumination_jitter, n);
        Binder::real(s, "noise", c.synthetic.noise, n);
        Binder::u64(s, "seed", c.synthetic.seed, n);
    }
    {
        const std::string n = "backbone";
        auto& s = b.section(n);
        Binder::integer(s, "stem_width", c.backbone.stem_width, n);
        Binder::integer(s, "stem_stride", c.backbone.stem_stride, n);
        Binder::int_list(s, "widths", c.backbone.widths, n);
        Binder::int_list(s, "strides", c.backbone.strides, n);
    }
    {
        const std::string n = "grabcut";
        auto& s = b.section(n);
        Binder::integer(s, "iters", c.grabcut.options.iters, n);
        Binder::integer(s, "components", c.grabcut.options.components, n);
        Binder::real(s, "lambda", c.grabcut.options.lambda, n);
        Binder::integer(s, "gmm_iters", c.grabcut.options.gmm_iters, n);
        Binder::real(s, "margin", c.grabcut.margin, n);
    }
    {
        const std::string n = "panet";
        auto& s = b.section(n);
        Binder::integer(s, "epochs", c.panet_training.epochs, n);
        Binder::integer(s, "batch_size", c.panet_training.batch_size, n);
        Binder::real(s, "lr", c.panet_training.lr, n);
        Binder::real(s, "warmup_fraction", c.panet_training.warmup_fraction, n);
        Binder::real(s, "weight_decay", c.panet_training.weight_decay, n);
        Binder::real(s, "flip", c.panet_training.flip, n);
        Binder::u64(s, "seed", c.panet_training.seed, n);
        Binder::boolean(s, "pcr_in_training", c.panet.pcr_in_training, n);
        Binder::real(s, "label_smoothing", c.panet.label_smoothing, n);
        Binder::real(s, "part_threshold", c.mask_threshold, n);
    }
    {
        const std::string n = "pmnet";
        auto& s = b.section(n);
        Binder::integer(s, "K", c.pmnet.K, n);
        Binder::integer(s, "global_conv_width", c.pmnet.global_conv_width, n);
        Binder::integer(s, "global_dim", c.pmnet.global_dim, n);
        Binder::integer(s, "part_channels", c.pmnet.part_channels, n);
        Binder::integer(s, "stream_dim", c.pmnet.stream_dim, n);
        Binder::real(s, "margin", c.pmnet.margin, n);
        Binder::real(s, "label_smoothing", c.pmnet.label_smoothing, n);
        Binder::boolean(s, "squared_transfer", c.pmnet.squared_transfer, n);
        s.push_back({"weighting",
                     {[&c](const std::string& v) {
                          if (v == "hul") c.pmnet.weighting = pmnet::Weighting::Hul;
                          else if (v == "fixed") c.pmnet.weighting = pmnet::Weighting::Fixed;
                          else bad("pmnet.weighting", v, "'hul' or 'fixed'");
                      },
                      [&c] { return std::string(c.pmnet.weighting == pmnet::Weighting::Hul ? "hul" : "fixed"); }}});
        Binder::triple(s, "fixed_weights", c.pmnet.fixed_weights, n);
        Binder::boolean(s, "global_only", c.pmnet.global_only, n);
    }
    {
        const std::string n = "training";
        auto& s = b.section(n);
        Binder::integer(s, "P", c.training.P, n);
        Binder::integer(s, "Q", c.training.Q, n);
        Binder::integer(s, "epochs", c.training.epochs, n);
        Binder::real(s, "lr", c.training.lr, n);
        Binder::real(s, "warmup_fraction", c.training.warmup_fraction, n);
        Binder::real(s, "weight_decay", c.training.weight_decay, n);
        Binder::real(s, "flip", c.training.augment.flip, n);
        Binder::real(s, "erase", c.training.augment.erase, n);
        Binder::boolean(s, "occlusion", c.training.augment.occlusion, n);
        Binder::real(s, "occlusion_prob", c.training.augment.occlusion_prob, n);
        Binder::u64(s, "seed", c.training.seed, n);
    }
    {
        const std::string n = "eval";
        auto& s = b.section(n);
        s.push_back({"protocol",
                     {[&c](const std::string& v) {
                          if (v == "veri") c.eval.protocol = EvalSettings::Protocol::Veri;
                          else if (v == "vehicleid") c.eval.protocol = EvalSettings::Protocol::VehicleId;
                          else bad("eval.protocol", v, "'veri' or 'vehicleid'");
                      },
                      [&c] {
                          return std::string(c.eval.protocol == EvalSettings::Protocol::Veri ? "veri" : "vehicleid");
                      }}});
        s.push_back({"lambda",
                     {[&c](const std::string& v) {
                          if (v == "auto") {
                              c.eval.lambda.reset();
                              return;
                          }
                          std::array<double, 3> l{};
                          Binder::Section tmp;
                          Binder::triple(tmp, "lambda", l, "eval");
                          tmp[0].second.set(v);
                          c.eval.lambda = l;
                      },
                      [&c] {
                          if (!c.eval.lambda) return std::string("auto");
                          const auto& l = *c.eval.lambda;
                          return fmt_real(l[0]) + "," + fmt_real(l[1]) + "," + fmt_real(l[2]);
                      }}});
        Binder::integer(s, "repeats", c.eval.repeats, n);
        Binder::u64(s, "seed", c.eval.seed, n);
    }
    return b;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    RunConfig c;
    auto b = bind(c);
    for (const auto& [sec_name, sec] : tree) {
        auto it = std::find_if(b.sections.begin(), b.sections.end(), [&](const auto& s) { return s.first == sec_name; });
        if (it == b.sections.end()) {
            if (sec.empty()) throw ValidationError("config: key '" + sec_name + "' outside any section");
            throw ValidationError("config: unknown section [" + sec_name + "]");
        }
        for (const auto& [key, node] : sec) {
            auto f = std::find_if(it->second.begin(), it->second.end(), [&](const auto& kv) { return kv.first == key; });
            if (f == it->second.end()) throw ValidationError("config: unknown key '" + key + "' in [" + sec_name + "]");
            f->second.set(trim(node.get_value<std::string>()));
        }
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_ini(const RunConfig& config) {
    RunConfig copy = config;
    auto b = bind(copy);
    std::string out;
    for (const auto& [name, fields] : b.sections) {
        out += "[" + name + "]\n";
        for (const auto& [key, f] : fields) out += key + " = " + f.get() + "\n";
        out += "\n";
    }
    return out;
}

}  // namespace pman::pipeline
