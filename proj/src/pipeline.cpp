#include "kneeseg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <utility>

#include <json.hpp>

#include "kneeseg/errors.hpp"
#include "kneeseg/kvol.hpp"
#include "kneeseg/threading.hpp"

namespace kneeseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json phantom_to_json(const PhantomSpec& p) {
    return json{{"dims", p.dims},
                {"sheet_count", p.sheet_count},
                {"thickness_min", p.thickness_min},
                {"thickness_max", p.thickness_max},
                {"foreground_mean", p.foreground_mean},
                {"background_mean", p.background_mean},
                {"noise_sigma", p.noise_sigma},
                {"seed", p.rng_seed}};
}

void phantom_from_json(const json& j, PhantomSpec& p) {
    if (j.contains("dims")) p.dims = j.at("dims").get<std::array<int, 3>>();
    if (j.contains("sheet_count")) p.sheet_count = j.at("sheet_count").get<int>();
    if (j.contains("thickness_min")) p.thickness_min = j.at("thickness_min").get<double>();
    if (j.contains("thickness_max")) p.thickness_max = j.at("thickness_max").get<double>();
    if (j.contains("foreground_mean")) p.foreground_mean = j.at("foreground_mean").get<double>();
    if (j.contains("background_mean")) p.background_mean = j.at("background_mean").get<double>();
    if (j.contains("noise_sigma")) p.noise_sigma = j.at("noise_sigma").get<double>();
    if (j.contains("seed")) p.rng_seed = j.at("seed").get<std::uint64_t>();
}

json stub_to_json(const StubParams& s) {
    return json{{"window_lo", s.window_lo},
                {"window_hi", s.window_hi},
                {"smoothing_radius", s.smoothing_radius},
                {"erosion_depth", s.erosion_depth},
                {"temperature", s.temperature}};
}

void stub_from_json(const json& j, StubParams& s) {
    if (j.contains("window_lo")) s.window_lo = j.at("window_lo").get<double>();
    if (j.contains("window_hi")) s.window_hi = j.at("window_hi").get<double>();
    if (j.contains("smoothing_radius")) s.smoothing_radius = j.at("smoothing_radius").get<int>();
    if (j.contains("erosion_depth")) s.erosion_depth = j.at("erosion_depth").get<int>();
    if (j.contains("temperature")) s.temperature = j.at("temperature").get<double>();
}

json config_to_json_obj(const PipelineConfig& cfg) {
    json j;
    j["input"] = json{{"volume", cfg.volume_path},
                      {"labels", cfg.labels_path},
                      {"phantom", phantom_to_json(cfg.phantom)}};
    j["probmaps"] = json{{"source", cfg.probmap_source_path},
                         {"lowrank", cfg.probmap_lowrank_path}};
    j["output_dir"] = cfg.output_dir;
    j["lowrank"] = json{{"block_depth", cfg.lowrank.block_depth},
                        {"slice_rank", cfg.lowrank.slice_rank},
                        {"hooi_tol", cfg.lowrank.hooi_tol},
                        {"hooi_max_iter", cfg.lowrank.hooi_max_iter}};
    j["matte"] = json{{"window_radius", cfg.matte.window_radius},
                      {"eps", cfg.matte.eps},
                      {"lambda", cfg.matte.lambda},
                      {"solver_tol", cfg.matte.solver_tol},
                      {"solver_max_iter", cfg.matte.solver_max_iter},
                      {"alpha_threshold", cfg.matte.alpha_threshold}};
    j["stub_source"] = stub_to_json(cfg.stub_source);
    j["stub_lowrank"] = stub_to_json(cfg.stub_lowrank);
    j["classes"] = cfg.class_names;
    j["threads"] = cfg.threads;
    j["save_intermediates"] = cfg.save_intermediates;
    return j;
}

PipelineConfig config_from_json_obj(const json& j) {
    PipelineConfig cfg = default_config();
    try {
        if (j.contains("input")) {
            const json& in = j.at("input");
            if (in.contains("volume")) cfg.volume_path = in.at("volume").get<std::string>();
            if (in.contains("labels")) cfg.labels_path = in.at("labels").get<std::string>();
            if (in.contains("phantom")) phantom_from_json(in.at("phantom"), cfg.phantom);
        }
        if (j.contains("probmaps")) {
            const json& pm = j.at("probmaps");
            if (pm.contains("source"))
                cfg.probmap_source_path = pm.at("source").get<std::string>();
            if (pm.contains("lowrank"))
                cfg.probmap_lowrank_path = pm.at("lowrank").get<std::string>();
        }
        if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("lowrank")) {
            const json& lr = j.at("lowrank");
            if (lr.contains("block_depth")) cfg.lowrank.block_depth = lr.at("block_depth").get<int>();
            if (lr.contains("slice_rank")) cfg.lowrank.slice_rank = lr.at("slice_rank").get<int>();
            if (lr.contains("hooi_tol")) cfg.lowrank.hooi_tol = lr.at("hooi_tol").get<double>();
            if (lr.contains("hooi_max_iter"))
                cfg.lowrank.hooi_max_iter = lr.at("hooi_max_iter").get<int>();
        }
        if (j.contains("matte")) {
            const json& m = j.at("matte");
            if (m.contains("window_radius")) cfg.matte.window_radius = m.at("window_radius").get<int>();
            if (m.contains("eps")) cfg.matte.eps = m.at("eps").get<double>();
            if (m.contains("lambda")) cfg.matte.lambda = m.at("lambda").get<double>();
            if (m.contains("solver_tol")) cfg.matte.solver_tol = m.at("solver_tol").get<double>();
            if (m.contains("solver_max_iter"))
                cfg.matte.solver_max_iter = m.at("solver_max_iter").get<int>();
            if (m.contains("alpha_threshold"))
                cfg.matte.alpha_threshold = m.at("alpha_threshold").get<double>();
        }
        if (j.contains("stub_source")) stub_from_json(j.at("stub_source"), cfg.stub_source);
        if (j.contains("stub_lowrank")) stub_from_json(j.at("stub_lowrank"), cfg.stub_lowrank);
        if (j.contains("classes"))
            cfg.class_names = j.at("classes").get<std::vector<std::string>>();
        if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
        if (j.contains("save_intermediates"))
            cfg.save_intermediates = j.at("save_intermediates").get<bool>();
    } catch (const json::exception& e) {
        throw usage_error(std::string("config: ") + e.what());
    }
    return cfg;
}

std::string fmt9(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9f", v);
    return buf;
}

json metrics_to_json(const MetricsReport& r) {
    json per;
    for (const ClassMetrics& m : r.per_class) {
        per[std::to_string(m.class_id)] =
            json{{"dice", m.dice},           {"precision", m.precision},
                 {"recall", m.recall},       {"voe_percent", m.voe_percent},
                 {"vd_percent", m.vd_percent}, {"pred_voxels", m.pred_voxels},
                 {"ref_voxels", m.ref_voxels}, {"intersection", m.intersection}};
    }
    return json{{"per_class", per},
                {"mean_dice", r.mean_dice},
                {"mean_precision", r.mean_precision},
                {"mean_recall", r.mean_recall},
                {"mean_voe_percent", r.mean_voe_percent},
                {"mean_vd_percent", r.mean_vd_percent}};
}

class StageTimer {
public:
    explicit StageTimer(std::vector<std::pair<std::string, double>>& out) : out_(out) {}

    template <typename F>
    auto run(const std::string& name, F&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            auto result = f();
            record(name, t0);
            return result;
        } catch (const usage_error& e) {
            throw usage_error("stage " + name + ": " + e.what());
        } catch (const format_error& e) {
            throw format_error("stage " + name + ": " + e.what());
        } catch (const numeric_error& e) {
            throw numeric_error("stage " + name + ": " + e.what());
        }
    }

private:
    void record(const std::string& name, std::chrono::steady_clock::time_point t0) {
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        out_.emplace_back(name, dt.count());
    }
    std::vector<std::pair<std::string, double>>& out_;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw format_error("cannot write " + path.string());
    out << text;
}

}  // namespace

PipelineConfig default_config() { return PipelineConfig{}; }

std::string config_to_json(const PipelineConfig& cfg) {
    return config_to_json_obj(cfg).dump(2) + "\n";
}

PipelineConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw usage_error(std::string("config: invalid JSON: ") + e.what());
    }
    return config_from_json_obj(j);
}

PipelineConfig config_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw usage_error("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json(text);
}

RunResult run_pipeline(const PipelineConfig& cfg) {
    set_max_threads(cfg.threads);
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);

    RunResult res;
    res.output_dir = cfg.output_dir;
    StageTimer timer(res.timings_s);

    write_text(dir / "config.json", config_to_json(cfg));

    // Input: external KVOL volume or generated phantom.
    bool have_ref = false;
    LabelVolume ref_full;
    DenseTensor3 source = timer.run("input", [&] {
        if (!cfg.volume_path.empty()) {
            DenseTensor3 v = read_volume(kvol_base(cfg.volume_path));
            if (!cfg.labels_path.empty()) {
                ref_full = read_labels(kvol_base(cfg.labels_path));
                if (ref_full.dims != v.dims)
                    throw usage_error("reference labels dims do not match the volume");
                have_ref = true;
            }
            return v;
        }
        auto [vol, labels] = make_phantom(cfg.phantom);
        quantize_f32(vol.data);
        ref_full = std::move(labels);
        have_ref = true;
        return vol;
    });
    write_volume((dir / "source").string(), source);

    // Low-rank path input; skipped when an external low-rank probmap
    // already provides that path's prediction.
    const bool need_lowrank_volume = cfg.probmap_lowrank_path.empty();
    DenseTensor3 lowrank_vol;
    if (need_lowrank_volume) {
        lowrank_vol = timer.run("lowrank", [&] {
            DenseTensor3 lr = blockwise_lowrank(source, cfg.lowrank);
            quantize_f32(lr.data);
            return lr;
        });
        if (cfg.save_intermediates) write_volume((dir / "lowrank").string(), lowrank_vol);
    }

    ProbVolume probs_source = timer.run("segment_source", [&] {
        ProbVolume p = cfg.probmap_source_path.empty()
                           ? stub_segment(source, cfg.stub_source)
                           : read_probmap(kvol_base(cfg.probmap_source_path));
        quantize_f32(p.data);
        return p;
    });
    ProbVolume probs_lowrank = timer.run("segment_lowrank", [&] {
        ProbVolume p = cfg.probmap_lowrank_path.empty()
                           ? stub_segment(lowrank_vol, cfg.stub_lowrank)
                           : read_probmap(kvol_base(cfg.probmap_lowrank_path));
        quantize_f32(p.data);
        return p;
    });
    if (cfg.save_intermediates) {
        write_probmap((dir / "probs_source").string(), probs_source);
        write_probmap((dir / "probs_lowrank").string(), probs_lowrank);
    }

    // Matting sees the source intensities again, rescaled only when they
    // fall outside [0,1].
    DenseTensor3 matte_input = source;
    {
        double lo = matte_input.data[0], hi = matte_input.data[0];
        for (double v : matte_input.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (lo < 0.0 || hi > 1.0) {
            const double span = hi - lo;
            for (double& v : matte_input.data) v = span > 0.0 ? (v - lo) / span : 0.0;
            quantize_f32(matte_input.data);
            if (cfg.save_intermediates)
                write_volume((dir / "matte_input").string(), matte_input);
        }
    }

    VolumeMatteArtifacts artifacts;
    LabelVolume labels_pred = timer.run("matte", [&] {
        return matte_volume(matte_input, probs_source, probs_lowrank, cfg.matte,
                            &res.matte_stats, cfg.save_intermediates ? &artifacts : nullptr);
    });
    write_labels((dir / "labels_pred").string(), labels_pred);
    if (cfg.save_intermediates) {
        for (size_t c = 0; c < artifacts.trimaps.size(); ++c) {
            const std::string tag = "_c" + std::to_string(c + 1);
            write_labels((dir / ("trimap" + tag)).string(), artifacts.trimaps[c]);
            DenseTensor3& alpha = artifacts.alphas[c];
            quantize_f32(alpha.data);
            write_volume((dir / ("alpha" + tag)).string(), alpha);
        }
    }

    LabelVolume labels_base = probs_source.argmax_labels();
    write_labels((dir / "labels_base").string(), labels_base);

    if (have_ref) {
        timer.run("eval", [&] {
            LabelVolume ref = ref_full;
            if (ref.class_count != labels_pred.class_count) {
                if (labels_pred.class_count != 2)
                    throw usage_error("reference labels class count (" +
                                      std::to_string(ref.class_count) +
                                      ") does not match the prediction (" +
                                      std::to_string(labels_pred.class_count) + ")");
                // Binary prediction against a multi-sheet ground truth:
                // collapse every foreground class.
                write_labels((dir / "labels_ref_full").string(), ref_full);
                for (auto& l : ref.labels) l = l > 0 ? 1 : 0;
                ref.class_count = 2;
            }
            write_labels((dir / "labels_ref").string(), ref);
            res.combined = evaluate(labels_pred, ref);
            res.base = evaluate(labels_base, ref);
            res.has_metrics = true;
            return 0;
        });
        write_text(dir / "metrics.tsv", serialize_report(res.combined));
    }

    // Human-readable summary; timing rows carry the "timing." prefix so
    // deterministic comparisons can filter them.
    std::string s;
    s += "kneeseg pipeline summary\n";
    s += "========================\n\n[config]\n";
    s += config_to_json(cfg);
    s += "\n[volume]\ndims\t" + std::to_string(source.dims[0]) + " " +
         std::to_string(source.dims[1]) + " " + std::to_string(source.dims[2]) + "\n";
    s += "classes\t" + std::to_string(labels_pred.class_count) + "\n";
    if (res.has_metrics) {
        s += "\n[metrics combined]\n" + serialize_report(res.combined);
        s += "\n[metrics base]\n" + serialize_report(res.base);
    } else {
        s += "\n[metrics]\nunavailable\tno reference labels\n";
    }
    s += "\n[alpha]\n";
    s += "pre_clamp_min\t" + fmt9(res.matte_stats.pre_clamp_min) + "\n";
    s += "pre_clamp_max\t" + fmt9(res.matte_stats.pre_clamp_max) + "\n";
    s += "max_constraint_deviation\t" + fmt9(res.matte_stats.max_constraint_deviation) + "\n";
    s += "solver_iterations\t" + std::to_string(res.matte_stats.solver_iterations) + "\n";
    s += "unknown_pixels\t" + std::to_string(res.matte_stats.unknown_pixels) + "\n";
    s += "\n[timing]\n";
    for (const auto& [name, secs] : res.timings_s)
        s += "timing." + name + "_s\t" + fmt9(secs) + "\n";
    write_text(dir / "summary.txt", s);

    json js;
    js["config"] = config_to_json_obj(cfg);
    js["volume"] = json{{"dims", source.dims}, {"classes", labels_pred.class_count}};
    js["metrics"] = json{{"combined", res.has_metrics ? metrics_to_json(res.combined) : json()},
                         {"base", res.has_metrics ? metrics_to_json(res.base) : json()}};
    js["alpha"] = json{{"pre_clamp_min", res.matte_stats.pre_clamp_min},
                       {"pre_clamp_max", res.matte_stats.pre_clamp_max},
                       {"max_constraint_deviation", res.matte_stats.max_constraint_deviation},
                       {"solver_iterations", res.matte_stats.solver_iterations},
                       {"unknown_pixels", res.matte_stats.unknown_pixels}};
    json jt;
    for (const auto& [name, secs] : res.timings_s) jt[name + "_s"] = secs;
    js["timing"] = jt;
    write_text(dir / "summary.json", js.dump(2) + "\n");

    return res;
}

SweepResult run_sweep(const PipelineConfig& cfg, const std::vector<int>& blocks,
                      const std::vector<int>& ranks,
                      const std::vector<std::uint64_t>& seeds) {
    if (blocks.empty() || ranks.empty())
        throw usage_error("run_sweep: blocks and ranks must be non-empty");
    // Bad (block, rank) values surface as FAILED cells, not as a grid abort.

    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);

    // Materialize the input corpus once; every cell then reads the same
    // files, so cells see bit-identical inputs.
    struct Input {
        std::string volume, labels;
    };
    std::vector<Input> corpus;
    if (!cfg.volume_path.empty()) {
        corpus.push_back({cfg.volume_path, cfg.labels_path});
    } else {
        std::vector<std::uint64_t> eff = seeds;
        if (eff.empty()) eff.push_back(cfg.phantom.rng_seed);
        for (std::uint64_t s : eff) {
            PhantomSpec spec = cfg.phantom;
            spec.rng_seed = s;
            auto [vol, labels] = make_phantom(spec);
            quantize_f32(vol.data);
            const std::string base = (dir / ("input_seed" + std::to_string(s))).string();
            write_volume(base + "_volume", vol);
            write_labels(base + "_labels", labels);
            corpus.push_back({base + "_volume", base + "_labels"});
        }
    }

    SweepResult out;
    bool have_baseline = false;

    auto run_cell = [&](int block, int rank) {
        SweepRow row;
        row.block = block;
        row.rank = rank;
        std::vector<double> dice_sum;
        std::vector<double> base_sum;
        try {
            for (size_t i = 0; i < corpus.size(); ++i) {
                PipelineConfig c = cfg;
                c.volume_path = corpus[i].volume;
                c.labels_path = corpus[i].labels;
                c.lowrank.block_depth = block;
                c.lowrank.slice_rank = rank;
                c.output_dir =
                    (dir / ("cell_b" + std::to_string(block) + "_r" + std::to_string(rank)) /
                     ("input" + std::to_string(i)))
                        .string();
                c.save_intermediates = false;
                const RunResult r = run_pipeline(c);
                if (!r.has_metrics)
                    throw usage_error("sweep requires reference labels for every input");
                if (dice_sum.empty()) {
                    dice_sum.assign(r.combined.per_class.size(), 0.0);
                    base_sum.assign(r.base.per_class.size(), 0.0);
                    if (out.fg_classes.empty())
                        for (const auto& m : r.combined.per_class)
                            out.fg_classes.push_back(m.class_id);
                }
                for (size_t k = 0; k < r.combined.per_class.size(); ++k)
                    dice_sum[k] += r.combined.per_class[k].dice;
                for (size_t k = 0; k < r.base.per_class.size(); ++k)
                    base_sum[k] += r.base.per_class[k].dice;
            }
            row.ok = true;
            row.class_dice.resize(dice_sum.size());
            double avg = 0.0;
            for (size_t k = 0; k < dice_sum.size(); ++k) {
                row.class_dice[k] = dice_sum[k] / corpus.size();
                avg += row.class_dice[k];
            }
            row.avg_dice = avg / static_cast<double>(dice_sum.size());
            if (!have_baseline) {
                out.baseline.ok = true;
                out.baseline.class_dice.resize(base_sum.size());
                double bavg = 0.0;
                for (size_t k = 0; k < base_sum.size(); ++k) {
                    out.baseline.class_dice[k] = base_sum[k] / corpus.size();
                    bavg += out.baseline.class_dice[k];
                }
                out.baseline.avg_dice = bavg / static_cast<double>(base_sum.size());
                have_baseline = true;
            }
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        return row;
    };

    for (int b : blocks)
        for (int r : ranks) out.rows.push_back(run_cell(b, r));

    for (size_t i = 0; i < out.rows.size(); ++i) {
        const SweepRow& row = out.rows[i];
        if (!row.ok) continue;
        if (out.best_index < 0) {
            out.best_index = static_cast<int>(i);
            continue;
        }
        const SweepRow& best = out.rows[out.best_index];
        const bool better =
            row.avg_dice > best.avg_dice ||
            (row.avg_dice == best.avg_dice &&
             (row.rank < best.rank || (row.rank == best.rank && row.block < best.block)));
        if (better) out.best_index = static_cast<int>(i);
    }

    write_text(dir / "sweep.txt", sweep_to_text(out));
    write_text(dir / "sweep.json", sweep_to_json(out));
    return out;
}

std::string sweep_to_text(const SweepResult& s) {
    std::string t = "path\tblock\trank";
    for (int c : s.fg_classes) t += "\tdice_class" + std::to_string(c);
    t += "\tavg_dice\tbest\n";

    auto row_text = [&](const char* path, const SweepRow& r, bool best) {
        std::string line = path;
        line += r.block > 0 ? "\t" + std::to_string(r.block) : "\t-";
        line += r.rank > 0 ? "\t" + std::to_string(r.rank) : "\t-";
        if (r.ok) {
            for (double d : r.class_dice) line += "\t" + fmt9(d);
            line += "\t" + fmt9(r.avg_dice);
            line += best ? "\t*" : "\t";
        } else {
            for (size_t k = 0; k < s.fg_classes.size(); ++k) line += "\tFAILED";
            line += "\tFAILED\t";
        }
        return line + "\n";
    };

    if (s.baseline.ok || !s.rows.empty()) t += row_text("base", s.baseline, false);
    for (size_t i = 0; i < s.rows.size(); ++i)
        t += row_text("combined", s.rows[i], static_cast<int>(i) == s.best_index);
    return t;
}

std::string sweep_to_json(const SweepResult& s) {
    auto row_json = [](const SweepRow& r) {
        json j{{"block", r.block}, {"rank", r.rank}, {"ok", r.ok}};
        if (r.ok) {
            j["class_dice"] = r.class_dice;
            j["avg_dice"] = r.avg_dice;
        } else {
            j["error"] = r.error;
        }
        return j;
    };
    json cells = json::array();
    for (const SweepRow& r : s.rows) cells.push_back(row_json(r));
    json j{{"baseline", row_json(s.baseline)},
           {"cells", cells},
           {"best_index", s.best_index},
           {"fg_classes", s.fg_classes}};
    return j.dump(2) + "\n";
}

}  // namespace kneeseg
