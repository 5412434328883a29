#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kneeseg/matting.hpp"
#include "kneeseg/metrics.hpp"
#include "kneeseg/phantom.hpp"
#include "kneeseg/tucker.hpp"

namespace kneeseg {

/// End-to-end run configuration. Defaults reproduce the reference
/// operating point (block depth 10, slice rank 3).
struct PipelineConfig {
    // Input: an existing KVOL volume (with optional reference labels), or
    // a generated phantom when volume_path is empty.
    std::string volume_path;
    std::string labels_path;
    PhantomSpec phantom;

    // Externally supplied probability maps; when set they replace the stub
    // segmenter on the corresponding path.
    std::string probmap_source_path;
    std::string probmap_lowrank_path;

    std::string output_dir = "run_out";
    LowRankConfig lowrank;
    MatteParams matte;
    StubParams stub_source;
    StubParams stub_lowrank;
    std::vector<std::string> class_names = {"background", "tissue"};
    int threads = 0;
    bool save_intermediates = true;
};

PipelineConfig default_config();
std::string config_to_json(const PipelineConfig& cfg);
PipelineConfig config_from_json(const std::string& text);
PipelineConfig config_from_file(const std::string& path);

struct RunResult {
    std::string output_dir;
    bool has_metrics = false;
    MetricsReport combined;  // full pipeline vs reference labels
    MetricsReport base;      // source-path argmax vs reference labels
    VolumeMatteStats matte_stats;
    std::vector<std::pair<std::string, double>> timings_s;  // stage name -> seconds
};

/// Runs the full pipeline, persisting every stage artifact in KVOL format
/// under cfg.output_dir together with metrics.tsv, summary.txt and
/// summary.json. Stage failures carry the stage name; artifacts produced
/// before the failure are left in place.
RunResult run_pipeline(const PipelineConfig& cfg);

struct SweepRow {
    int block = 0, rank = 0;
    bool ok = false;
    std::string error;
    std::vector<double> class_dice;  // per foreground class, seed-averaged
    double avg_dice = 0.0;
};

struct SweepResult {
    SweepRow baseline;            // source path only; block/rank unused
    std::vector<SweepRow> rows;   // grid cells in (block, rank) order
    int best_index = -1;          // ties: smaller rank, then smaller block
    std::vector<int> fg_classes;
};

/// Grid sweep over (block depth, slice rank): the input is materialized
/// once, every cell runs the full pipeline on it, failed cells are marked
/// and skipped. With several seeds the phantom corpus is regenerated per
/// seed and dice scores are averaged.
SweepResult run_sweep(const PipelineConfig& cfg, const std::vector<int>& blocks,
                      const std::vector<int>& ranks,
                      const std::vector<std::uint64_t>& seeds = {});

std::string sweep_to_text(const SweepResult& s);
std::string sweep_to_json(const SweepResult& s);

}  // namespace kneeseg
