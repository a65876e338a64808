#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "pman/error.hpp"
#include "pman/pipeline/commands.hpp"
#include "pman/pipeline/config.hpp"
#include "support/checks.hpp"

namespace fs = std::filesystem;
using namespace pman;
using Clock = std::chrono::steady_clock;

namespace {

struct Line {
    int id = 0;
    bool pass = false;
    std::string text;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Runner {
public:
    Runner(pipeline::RunConfig config, fs::path work, int occlusion_draws, bool verbose)
        : cfg_(std::move(config)), work_(std::move(work)), draws_(occlusion_draws), log_(verbose ? &std::cerr : nullptr) {}

    Line check(int id, const char* what, double budget, const std::function<checks::Result()>& fn) {
        const auto r = fn();
        const bool in_time = r.seconds < budget;
        return {id, r.pass && in_time,
                fmt("%s: %s; %.1f s (limit %.0f s)", what, r.detail.c_str(), r.seconds, budget)};
    }

    struct Pipeline {
        fs::path dir;
        double seconds = 0.0;
        eval::EvalReport full, lite;
    };

    // gen-data -> train-panet -> gen-masks -> train-pmnet -> eval (both modes)
    Pipeline end_to_end(const std::string& name) {
        Pipeline p;
        p.dir = work_ / name;
        const auto t0 = Clock::now();
        note("[" + name + "] gen-data");
        pipeline::cmd_gen_data(cfg_, p.dir / "data", true);
        note("[" + name + "] train-panet");
        pipeline::cmd_train_panet(cfg_, p.dir / "data", p.dir / "panet.ckpt", log_);
        note("[" + name + "] gen-masks");
        const auto stats = pipeline::cmd_gen_masks(p.dir / "panet.ckpt", p.dir / "data", p.dir / "masks", cfg_.pmnet.K,
                                                   cfg_.mask_threshold);
        note(fmt("[%s] masks for %zu images, %zu band fallbacks", name.c_str(), stats.images, stats.band_fallbacks));
        note("[" + name + "] train-pmnet");
        pipeline::cmd_train_pmnet(cfg_, p.dir / "data", p.dir / "panet.ckpt", p.dir / "pmnet.ckpt", log_);
        p.full = evaluate(p.dir, p.dir / "pmnet.ckpt", true, false, p.dir / "report.csv");
        p.lite = evaluate(p.dir, p.dir / "pmnet.ckpt", false, false, p.dir / "report_pmnet_only.csv");
        p.seconds = since(t0);
        return p;
    }

    eval::EvalReport evaluate(const fs::path& dir, const fs::path& model, bool teachers, bool occluded,
                              std::optional<fs::path> report = std::nullopt, std::uint64_t eval_seed = 0) {
        pipeline::EvalRequest r;
        r.pmnet = model;
        if (teachers) r.panet = dir / "panet.ckpt";
        r.data = dir / "data";
        r.teachers = teachers;
        r.occluded_queries = occluded;
        r.report = std::move(report);
        r.config = cfg_;
        r.config.eval.seed = eval_seed;
        return pipeline::cmd_eval(r);
    }

    // Mean mAP over several occlusion draws of the query set.
    double occluded_map(const fs::path& dir, const fs::path& model) {
        double sum = 0.0;
        for (int d = 0; d < draws_; ++d) sum += evaluate(dir, model, true, true, std::nullopt, d).mAP;
        return sum / draws_;
    }

    fs::path train_variant(const Pipeline& base, const std::string& name, const pipeline::RunConfig& c) {
        note("[" + name + "] train-pmnet");
        const auto out = base.dir / (name + ".ckpt");
        std::optional<fs::path> pa;
        if (!c.pmnet.global_only) pa = base.dir / "panet.ckpt";
        pipeline::cmd_train_pmnet(c, base.dir / "data", pa, out, log_);
        return out;
    }

    const pipeline::RunConfig& config() const { return cfg_; }

private:
    void note(const std::string& s) {
        if (log_) *log_ << s << "\n";
    }

    pipeline::RunConfig cfg_;
    fs::path work_;
    int draws_;
    std::ostream* log_;
};

std::set<int> parse_selection(const std::string& s) {
    std::set<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto dash = item.find('-');
        const int lo = std::stoi(item.substr(0, dash));
        const int hi = dash == std::string::npos ? lo : std::stoi(item.substr(dash + 1));
        for (int i = lo; i <= hi; ++i) out.insert(i);
    }
    for (int i : out)
        if (i < 1 || i > 9) throw ValidationError("criteria are numbered 1-9");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance run: one PASS/FAIL line per criterion"};
    std::string config_path = PMAN_DESK_CONFIG, work, only = "1-9";
    int seeds = 20, draws = 5;
    bool verbose = false, keep = false;
    app.add_option("--config", config_path, "Run config for the end-to-end criteria")->check(CLI::ExistingFile);
    app.add_option("--work", work, "Working directory (default: a fresh temp directory)");
    app.add_option("--only", only, "Criteria to run, e.g. 1-5 or 6,9");
    app.add_option("--grad-seeds", seeds, "Seeds for the gradient suite")->check(CLI::Range(1, 1000));
    app.add_option("--occlusion-draws", draws, "Occlusion draws per occluded evaluation")->check(CLI::Range(1, 100));
    app.add_flag("-v,--verbose", verbose, "Progress on stderr");
    app.add_flag("--keep", keep, "Keep the working directory");
    CLI11_PARSE(app, argc, argv);

    try {
        const auto want = parse_selection(only);
        const auto cfg = pipeline::load_config(config_path);
        const fs::path root = work.empty() ? fs::temp_directory_path() / "pman_acceptance" : fs::path(work);
        Runner run(cfg, root, draws, verbose);

        std::vector<Line> lines;
        auto emit = [&](Line l) {
            std::cout << (l.pass ? "PASS" : "FAIL") << " criterion " << l.id << ": " << l.text << std::endl;
            lines.push_back(std::move(l));
        };

        if (want.contains(1)) emit(run.check(1, "gradient suite", 300, [&] { return checks::gradient_suite(seeds); }));
        if (want.contains(2)) emit(run.check(2, "oracle suite", 300, checks::oracle_suite));
        if (want.contains(3)) emit(run.check(3, "formula checks", 300, checks::formula_checks));
        if (want.contains(4)) emit(run.check(4, "part recovery", 300, checks::part_recovery));
        if (want.contains(5)) emit(run.check(5, "grabcut", 300, checks::grabcut_suite));

        const bool pipeline_needed = want.contains(6) || want.contains(7) || want.contains(8) || want.contains(9);
        std::optional<Runner::Pipeline> a;
        if (pipeline_needed) a = run.end_to_end("run_a");

        if (want.contains(6)) {
            const double gap = std::fabs(a->full.mAP - a->lite.mAP);
            const bool pass = a->full.cmc1 >= 0.90 && a->full.mAP >= 0.80 && a->seconds < 1800.0 && gap <= 0.05;
            emit({6, pass,
                  fmt("end to end: CMC@1 %.4f (>= 0.90), mAP %.4f (>= 0.80), pmnet-only mAP %.4f (gap %.4f <= 0.05); "
                      "%.1f s (limit 1800 s)",
                      a->full.cmc1, a->full.mAP, a->lite.mAP, gap, a->seconds)});
        }

        if (want.contains(7)) {
            const auto t0 = Clock::now();
            auto c = cfg;
            c.training.augment.occlusion = true;
            const auto full = run.train_variant(*a, "occ_full", c);
            c.pmnet.global_only = true;
            const auto global = run.train_variant(*a, "occ_global", c);
            const double m_full = run.occluded_map(a->dir, full);
            const double m_global = run.occluded_map(a->dir, global);
            emit({7, m_full > m_global,
                  fmt("occluded queries (mean of %d draws): full mAP %.4f, global-only mAP %.4f; %.1f s", draws, m_full,
                      m_global, since(t0))});
        }

        if (want.contains(8)) {
            const auto t0 = Clock::now();
            const double hul = a->full.mAP;
            double best = 0.0;
            std::string detail = fmt("HUL mAP %.4f", hul);
            for (double w : {1.0, 2.0, 4.0}) {
                auto c = cfg;
                c.pmnet.weighting = pmnet::Weighting::Fixed;
                c.pmnet.fixed_weights = {w, 1.0, 1.0};
                const auto model = run.train_variant(*a, fmt("fixed_%g", w), c);
                const double m = run.evaluate(a->dir, model, true, false).mAP;
                best = std::max(best, m);
                detail += fmt(", %g:1:1 mAP %.4f", w, m);
            }
            emit({8, hul >= best - 0.02, detail + fmt(" (need HUL >= %.4f); %.1f s", best - 0.02, since(t0))});
        }

        if (want.contains(9)) {
            const auto b = run.end_to_end("run_b");
            const auto ra = slurp(a->dir / "report.csv"), rb = slurp(b.dir / "report.csv");
            const auto la = slurp(a->dir / "report_pmnet_only.csv"), lb = slurp(b.dir / "report_pmnet_only.csv");
            emit({9, !ra.empty() && ra == rb && la == lb,
                  fmt("second identical-seed run: reports %s; %.1f s", ra == rb && la == lb ? "byte-identical" : "differ",
                      b.seconds)});
        }

        if (!keep && work.empty()) fs::remove_all(root);
        std::size_t passed = 0;
        for (const auto& l : lines) passed += l.pass;
        std::cout << passed << "/" << lines.size() << " criteria passed" << std::endl;
        return passed == lines.size() ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pipeline::exit_code_for(e);
    }
}
