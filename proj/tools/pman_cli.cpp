#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "support/checks.hpp"
#include "pman/error.hpp"
#include "pman/pipeline/commands.hpp"
#include "pman/pipeline/config.hpp"
#include "pman/simd/gemm.hpp"

namespace fs = std::filesystem;
using namespace pman;

namespace {

pipeline::RunConfig config_or_default(const std::string& path) {
    return path.empty() ? pipeline::RunConfig{} : pipeline::load_config(path);
}

int run(int argc, char** argv) {
    CLI::App app{"Part-mentored vehicle re-identification"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Suppress progress output");

    std::string spec_path, out, config_path, data, panet_path, pmnet_path, report, image, mode = "full";
    bool force = false;
    int K = 3;
    double threshold = 0.5;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    gen->add_option("--spec", spec_path, "Config file with a [synthetic] section")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", out, "Output directory")->required();
    gen->add_flag("--force", force, "Write into a non-empty directory");

    auto* tpa = app.add_subcommand("train-panet", "Train PANet on GrabCut pseudo labels");
    tpa->add_option("--config", config_path, "Run config")->required()->check(CLI::ExistingFile);
    tpa->add_option("--data", data, "Dataset directory")->required();
    tpa->add_option("--out", out, "Checkpoint to write")->required();

    auto* gm = app.add_subcommand("gen-masks", "Export part masks for every image");
    gm->add_option("--panet", panet_path, "PANet checkpoint")->required()->check(CLI::ExistingFile);
    gm->add_option("--data", data, "Dataset directory")->required();
    gm->add_option("--out", out, "Output directory")->required();
    gm->add_option("--config", config_path, "Run config (K and part threshold)")->check(CLI::ExistingFile);

    auto* tpm = app.add_subcommand("train-pmnet", "Train PMNet with a frozen PANet");
    tpm->add_option("--config", config_path, "Run config")->required()->check(CLI::ExistingFile);
    tpm->add_option("--data", data, "Dataset directory")->required();
    tpm->add_option("--panet", panet_path, "PANet checkpoint (not needed for global-only)")->check(CLI::ExistingFile);
    tpm->add_option("--out", out, "Checkpoint to write")->required();

    auto add_eval = [&](CLI::App* e) {
        e->add_option("--pmnet", pmnet_path, "PMNet checkpoint")->required()->check(CLI::ExistingFile);
        e->add_option("--panet", panet_path, "PANet checkpoint (full mode)")->check(CLI::ExistingFile);
        e->add_option("--data", data, "Dataset directory")->required();
        e->add_option("--mode", mode, "full or pmnet-only")->check(CLI::IsMember({"full", "pmnet-only"}));
        e->add_option("--report", report, "CSV report to write");
        e->add_option("--config", config_path, "Run config (eval section)")->check(CLI::ExistingFile);
    };
    auto* ev = app.add_subcommand("eval", "Evaluate retrieval on the query/gallery split");
    add_eval(ev);
    auto* evo = app.add_subcommand("eval-occluded", "Evaluate with occluded queries");
    add_eval(evo);

    auto* vis = app.add_subcommand("visualize", "Export per-stream attention maps");
    vis->add_option("--pmnet", pmnet_path, "PMNet checkpoint")->required()->check(CLI::ExistingFile);
    vis->add_option("--image", image, "Input PNG")->required()->check(CLI::ExistingFile);
    vis->add_option("--out", out, "Output directory")->required();

    auto* st = app.add_subcommand("selftest", "Gradient checks and oracle comparisons");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    std::ostream* progress = quiet ? nullptr : &std::cerr;

    if (*gen) {
        pipeline::cmd_gen_data(pipeline::load_config(spec_path), out, force);
    } else if (*tpa) {
        pipeline::cmd_train_panet(pipeline::load_config(config_path), data, out, progress);
    } else if (*gm) {
        if (!config_path.empty()) {
            const auto c = pipeline::load_config(config_path);
            K = c.pmnet.K;
            threshold = c.mask_threshold;
        }
        const auto stats = pipeline::cmd_gen_masks(panet_path, data, out, K, threshold);
        std::cout << "masks for " << stats.images << " images (" << stats.band_fallbacks << " band fallbacks, "
                  << stats.foreground_fallbacks << " empty foregrounds)\n";
    } else if (*tpm) {
        std::optional<fs::path> pa;
        if (!panet_path.empty()) pa = panet_path;
        pipeline::cmd_train_pmnet(pipeline::load_config(config_path), data, pa, out, progress);
    } else if (*ev || *evo) {
        pipeline::EvalRequest r;
        r.pmnet = pmnet_path;
        if (!panet_path.empty()) r.panet = panet_path;
        r.data = data;
        r.teachers = mode == "full";
        r.occluded_queries = static_cast<bool>(*evo);
        if (!report.empty()) r.report = report;
        r.config = config_or_default(config_path);
        std::cout << pipeline::cmd_eval(r).to_csv();
    } else if (*vis) {
        pipeline::cmd_visualize(pmnet_path, image, out);
    } else if (*st) {
        std::cout << "gemm kernels: " << simd::isa_name(simd::active_isa()) << "\n";
        bool ok = true;
        for (const auto& r : checks::run_selftest()) {
            std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
            ok = ok && r.pass;
        }
        return ok ? 0 : 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        const int code = pipeline::exit_code_for(e);
        std::cerr << (code == 1 ? "error: " : "internal error: ") << e.what() << "\n";
        return code;
    }
}
