#pragma once

#include <istream>
#include <string>
#include <vector>

#include "sstage/common.hpp"

namespace sstage {

// Fixed observation / prediction horizon used throughout.
inline constexpr int kTIn = 8;
inline constexpr int kTOut = 12;
inline constexpr int kHorizon = kTIn + kTOut;

struct AnnotationRecord {
    long frame_id = 0;
    long agent_id = 0;
    double x = 0.0;
    double y = 0.0;
};

// A window of co-present agents: every agent has a position at all
// t_in + t_out sampled steps. Positions are world-frame meters,
// laid out [K][horizon][2].
struct Scene {
    long scene_id = 0;
    std::vector<long> agent_ids;      // ascending
    std::vector<double> positions;    // [K][t_in+t_out][2]
    std::string source_set;
    long first_frame = 0;             // frame id of step 0
    long frame_step = 1;              // native gap between sampled frames
    int t_in = kTIn;
    int t_out = kTOut;

    int agents() const { return static_cast<int>(agent_ids.size()); }
    int horizon() const { return t_in + t_out; }
    double pos(int k, int t, int d) const { return positions[(static_cast<std::size_t>(k) * horizon() + t) * 2 + d]; }
    double& pos(int k, int t, int d) { return positions[(static_cast<std::size_t>(k) * horizon() + t) * 2 + d]; }
};

struct SplitSpec {
    std::string test_set;
    std::vector<std::string> train_sets;
    std::vector<std::string> val_sets;  // validation is carved out of the train sets by scene hash
    double val_fraction = 0.1;
};

const std::vector<std::string>& dataset_names();

// Text format: one record per line, "frame_id agent_id x y", any run of
// spaces/tabs as separator; blank lines and lines starting with '#' skipped.
// Frame/agent ids may be written as floats but must be exactly integral.
// Output is sorted by (frame_id, agent_id); duplicated keys are rejected.
std::vector<AnnotationRecord> parse_annotations(std::istream& in);
std::vector<AnnotationRecord> parse_annotations_file(const std::string& path);

// Slides a window of t_in + t_out consecutive sampled frames (advanced by
// `stride` frames) and emits one scene per window, keeping only agents
// observed at every step of the window. Windows with no such agent produce
// nothing. scene_ids are sequential over emitted scenes.
std::vector<Scene> build_scenes(const std::vector<AnnotationRecord>& records, int t_in = kTIn, int t_out = kTOut,
                                int stride = 1, const std::string& source_set = "");

// Inverse of parse+build for a single scene; coordinates round-trip exactly.
std::string scene_to_annotations(const Scene& scene);

// Leave-one-out split over the five standard sets.
SplitSpec make_split(const std::string& test_set, double val_fraction = 0.1);

// Deterministic hash-based holdout: true if the scene belongs to the
// validation part of its (training) set.
bool is_validation_scene(const Scene& scene, double val_fraction);

// Loads every *.txt under dir (sorted by filename), windows each file, tags
// scenes with set_name and renumbers scene_ids sequentially over the set.
std::vector<Scene> load_dataset_dir(const std::string& dir, const std::string& set_name, int stride = 1);

}  // namespace sstage
