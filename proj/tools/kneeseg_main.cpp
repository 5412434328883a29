#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kneeseg/errors.hpp"
#include "kneeseg/kvol.hpp"
#include "kneeseg/matting.hpp"
#include "kneeseg/metrics.hpp"
#include "kneeseg/phantom.hpp"
#include "kneeseg/pipeline.hpp"
#include "kneeseg/threading.hpp"
#include "kneeseg/tucker.hpp"

namespace {

using namespace kneeseg;

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::string cur;
    for (char ch : s + ",") {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(std::stoi(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::string cur;
    for (char ch : s + ",") {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(std::stoull(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    return out;
}

void add_stub_flags(CLI::App* cmd, StubParams& p) {
    cmd->add_option("--window-lo", p.window_lo, "lower edge of the intensity window");
    cmd->add_option("--window-hi", p.window_hi, "upper edge of the intensity window");
    cmd->add_option("--smooth", p.smoothing_radius, "box smoothing radius in voxels");
    cmd->add_option("--erode", p.erosion_depth, "in-plane erosion depth in voxels");
    cmd->add_option("--temperature", p.temperature, "logistic temperature");
}

void add_matte_flags(CLI::App* cmd, MatteParams& p) {
    cmd->add_option("--radius", p.window_radius, "matting window radius (1 -> 3x3)");
    cmd->add_option("--eps", p.eps, "covariance regularizer");
    cmd->add_option("--lambda", p.lambda, "constraint weight");
    cmd->add_option("--tol", p.solver_tol, "CG relative residual tolerance");
    cmd->add_option("--max-iter", p.solver_max_iter, "CG iteration cap");
    cmd->add_option("--alpha-threshold", p.alpha_threshold, "binarization threshold");
}

DenseTensor3 normalized_for_matting(DenseTensor3 v) {
    double lo = v.data[0], hi = v.data[0];
    for (double x : v.data) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (lo < 0.0 || hi > 1.0) {
        const double span = hi - lo;
        for (double& x : v.data) x = span > 0.0 ? (x - lo) / span : 0.0;
    }
    return v;
}

int run(int argc, char** argv) {
    CLI::App app{"Block-wise low-rank reconstruction, dual-path fusion and "
                 "matting-based label refinement for volumetric segmentation"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "cap worker threads (0 = hardware)");

    // phantom
    auto* cmd_phantom = app.add_subcommand("phantom", "generate a synthetic sheet phantom");
    PhantomSpec spec;
    std::string phantom_dims = "48,48,32";
    std::string phantom_out = "phantom_volume", phantom_labels = "phantom_labels";
    cmd_phantom->add_option("--dims", phantom_dims, "I1,I2,I3");
    cmd_phantom->add_option("--sheets", spec.sheet_count, "number of sheets");
    cmd_phantom->add_option("--thickness-min", spec.thickness_min, "min sheet thickness");
    cmd_phantom->add_option("--thickness-max", spec.thickness_max, "max sheet thickness");
    cmd_phantom->add_option("--fg-mean", spec.foreground_mean, "foreground mean intensity");
    cmd_phantom->add_option("--bg-mean", spec.background_mean, "background mean intensity");
    cmd_phantom->add_option("--noise", spec.noise_sigma, "gaussian noise sigma");
    cmd_phantom->add_option("--seed", spec.rng_seed, "rng seed");
    cmd_phantom->add_option("--out", phantom_out, "output volume base path");
    cmd_phantom->add_option("--labels", phantom_labels, "output labels base path");

    // lowrank
    auto* cmd_lowrank = app.add_subcommand("lowrank", "block-wise low-rank reconstruction");
    std::string lr_in, lr_out = "lowrank";
    LowRankConfig lr_cfg;
    cmd_lowrank->add_option("--in", lr_in, "input volume")->required();
    cmd_lowrank->add_option("--out", lr_out, "output volume base path");
    cmd_lowrank->add_option("--block-depth", lr_cfg.block_depth, "slices per block");
    cmd_lowrank->add_option("--slice-rank", lr_cfg.slice_rank, "retained slice rank");
    cmd_lowrank->add_option("--hooi-tol", lr_cfg.hooi_tol, "HOOI fit tolerance");
    cmd_lowrank->add_option("--hooi-max-iter", lr_cfg.hooi_max_iter, "HOOI sweep cap");

    // segment
    auto* cmd_segment = app.add_subcommand("segment", "intensity-window stub segmenter");
    std::string seg_in, seg_out = "probmap";
    StubParams seg_params;
    cmd_segment->add_option("--in", seg_in, "input volume")->required();
    cmd_segment->add_option("--out", seg_out, "output probmap base path");
    add_stub_flags(cmd_segment, seg_params);

    // trimap
    auto* cmd_trimap = app.add_subcommand("trimap", "superimpose two probmaps into a trimap");
    std::string tri_src, tri_lr, tri_out = "trimap";
    int tri_class = 1;
    cmd_trimap->add_option("--source", tri_src, "source-path probmap")->required();
    cmd_trimap->add_option("--lowrank", tri_lr, "low-rank-path probmap")->required();
    cmd_trimap->add_option("--class", tri_class, "foreground class id");
    cmd_trimap->add_option("--out", tri_out, "output labels base path (0=bg,1=unknown,2=fg)");

    // matte
    auto* cmd_matte = app.add_subcommand("matte", "alpha-matting label fusion");
    std::string mat_vol, mat_src, mat_lr, mat_out = "labels_pred", mat_artifacts;
    MatteParams mat_params;
    cmd_matte->add_option("--volume", mat_vol, "intensity volume")->required();
    cmd_matte->add_option("--source", mat_src, "source-path probmap")->required();
    cmd_matte->add_option("--lowrank", mat_lr, "low-rank-path probmap")->required();
    cmd_matte->add_option("--out", mat_out, "output labels base path");
    cmd_matte->add_option("--artifacts-dir", mat_artifacts,
                          "directory for per-class trimaps and alphas");
    add_matte_flags(cmd_matte, mat_params);

    // eval
    auto* cmd_eval = app.add_subcommand("eval", "volumetric overlap metrics");
    std::string eval_pred, eval_ref, eval_out;
    cmd_eval->add_option("--pred", eval_pred, "predicted labels")->required();
    cmd_eval->add_option("--ref", eval_ref, "reference labels")->required();
    cmd_eval->add_option("--out", eval_out, "also write the table to this file");

    // pipeline
    auto* cmd_pipeline = app.add_subcommand("pipeline", "full end-to-end run");
    std::string pipe_config, pipe_out;
    cmd_pipeline->add_option("--config", pipe_config, "pipeline config JSON");
    cmd_pipeline->add_option("--out", pipe_out, "override output directory");

    // sweep
    auto* cmd_sweep = app.add_subcommand("sweep", "block/rank grid sweep");
    std::string sweep_config, sweep_out;
    std::string sweep_blocks = "5,10,15", sweep_ranks = "2,3,4,5", sweep_seeds;
    cmd_sweep->add_option("--config", sweep_config, "pipeline config JSON");
    cmd_sweep->add_option("--out", sweep_out, "override output directory");
    cmd_sweep->add_option("--blocks", sweep_blocks, "comma-separated block depths");
    cmd_sweep->add_option("--ranks", sweep_ranks, "comma-separated slice ranks");
    cmd_sweep->add_option("--seeds", sweep_seeds, "comma-separated phantom seeds");

    // print-config
    app.add_subcommand("print-config", "print the default pipeline config JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Help exits 0; every other parse problem is a usage error.
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    set_max_threads(threads);

    if (cmd_phantom->parsed()) {
        const auto d = parse_int_list(phantom_dims);
        if (d.size() != 3) throw usage_error("--dims must be I1,I2,I3");
        spec.dims = {d[0], d[1], d[2]};
        auto [vol, labels] = make_phantom(spec);
        write_volume(kvol_base(phantom_out), vol);
        write_labels(kvol_base(phantom_labels), labels);
        std::printf("wrote %s.{json,bin} and %s.{json,bin}\n", phantom_out.c_str(),
                    phantom_labels.c_str());
    } else if (cmd_lowrank->parsed()) {
        const DenseTensor3 v = read_volume(kvol_base(lr_in));
        write_volume(kvol_base(lr_out), blockwise_lowrank(v, lr_cfg));
        std::printf("wrote %s.{json,bin}\n", lr_out.c_str());
    } else if (cmd_segment->parsed()) {
        const DenseTensor3 v = read_volume(kvol_base(seg_in));
        write_probmap(kvol_base(seg_out), stub_segment(v, seg_params));
        std::printf("wrote %s.{json,bin}\n", seg_out.c_str());
    } else if (cmd_trimap->parsed()) {
        const ProbVolume ps = read_probmap(kvol_base(tri_src));
        const ProbVolume pt = read_probmap(kvol_base(tri_lr));
        if (ps.dims != pt.dims || ps.class_count != pt.class_count)
            throw usage_error("trimap: probmap shapes differ");
        if (tri_class < 1 || tri_class >= ps.class_count)
            throw usage_error("trimap: class id out of range");
        const LabelVolume as = ps.argmax_labels();
        const LabelVolume at = pt.argmax_labels();
        LabelVolume tri(ps.dims[0], ps.dims[1], ps.dims[2], 3);
        for (size_t p = 0; p < tri.size(); ++p) {
            const bool s = as.labels[p] == tri_class;
            const bool t = at.labels[p] == tri_class;
            tri.labels[p] = s && t ? 2 : (s || t ? 1 : 0);
        }
        write_labels(kvol_base(tri_out), tri);
        std::printf("wrote %s.{json,bin}\n", tri_out.c_str());
    } else if (cmd_matte->parsed()) {
        const DenseTensor3 v = normalized_for_matting(read_volume(kvol_base(mat_vol)));
        const ProbVolume ps = read_probmap(kvol_base(mat_src));
        const ProbVolume pt = read_probmap(kvol_base(mat_lr));
        VolumeMatteStats stats;
        VolumeMatteArtifacts artifacts;
        const bool keep = !mat_artifacts.empty();
        const LabelVolume labels =
            matte_volume(v, ps, pt, mat_params, &stats, keep ? &artifacts : nullptr);
        write_labels(kvol_base(mat_out), labels);
        if (keep) {
            std::filesystem::create_directories(mat_artifacts);
            for (size_t c = 0; c < artifacts.trimaps.size(); ++c) {
                const std::string tag = "_c" + std::to_string(c + 1);
                write_labels(mat_artifacts + "/trimap" + tag, artifacts.trimaps[c]);
                write_volume(mat_artifacts + "/alpha" + tag, artifacts.alphas[c]);
            }
        }
        std::printf("wrote %s.{json,bin}  (pre-clamp range [%.6f, %.6f], "
                    "max constraint deviation %.6f)\n",
                    mat_out.c_str(), stats.pre_clamp_min, stats.pre_clamp_max,
                    stats.max_constraint_deviation);
    } else if (cmd_eval->parsed()) {
        const LabelVolume pred = read_labels(kvol_base(eval_pred));
        const LabelVolume ref = read_labels(kvol_base(eval_ref));
        const std::string table = serialize_report(evaluate(pred, ref));
        std::fputs(table.c_str(), stdout);
        if (!eval_out.empty()) {
            std::ofstream out(eval_out);
            if (!out) throw format_error("cannot write " + eval_out);
            out << table;
        }
    } else if (cmd_pipeline->parsed()) {
        PipelineConfig cfg =
            pipe_config.empty() ? default_config() : config_from_file(pipe_config);
        if (!pipe_out.empty()) cfg.output_dir = pipe_out;
        if (threads > 0) cfg.threads = threads;
        const RunResult r = run_pipeline(cfg);
        std::printf("run directory: %s\n", r.output_dir.c_str());
        if (r.has_metrics)
            std::printf("mean dice: combined %.6f, base %.6f\n", r.combined.mean_dice,
                        r.base.mean_dice);
    } else if (cmd_sweep->parsed()) {
        PipelineConfig cfg =
            sweep_config.empty() ? default_config() : config_from_file(sweep_config);
        if (!sweep_out.empty()) cfg.output_dir = sweep_out;
        if (threads > 0) cfg.threads = threads;
        const SweepResult s = run_sweep(cfg, parse_int_list(sweep_blocks),
                                        parse_int_list(sweep_ranks),
                                        parse_u64_list(sweep_seeds));
        std::fputs(sweep_to_text(s).c_str(), stdout);
    } else {  // print-config
        std::fputs(config_to_json(default_config()).c_str(), stdout);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const usage_error& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const format_error& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 2;
    } catch (const numeric_error& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
