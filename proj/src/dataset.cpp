#include "sstage/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace sstage {

const std::vector<std::string>& dataset_names() {
    static const std::vector<std::string> names = {"eth", "hotel", "univ", "zara1", "zara2"};
    return names;
}

namespace {

bool parse_double(std::string_view tok, double& out) {
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

long to_exact_long(double v, const char* what, long line) {
    if (std::floor(v) != v || std::abs(v) > 9.0e15) {
        throw ParseError(std::string(what) + " is not an integer: " + std::to_string(v), line);
    }
    return static_cast<long>(v);
}

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::vector<AnnotationRecord> parse_annotations(std::istream& in) {
    std::vector<AnnotationRecord> records;
    std::set<std::pair<long, long>> seen;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t begin = line.find_first_not_of(" \t\r\n");
        if (begin == std::string::npos) continue;
        if (line[begin] == '#') continue;
        double fields[4];
        int n_fields = 0;
        std::size_t pos = begin;
        while (pos < line.size()) {
            std::size_t end = line.find_first_of(" \t\r\n", pos);
            if (end == std::string::npos) end = line.size();
            if (end > pos) {
                if (n_fields == 4) throw ParseError("expected 4 fields, found more", line_no);
                if (!parse_double(std::string_view(line).substr(pos, end - pos), fields[n_fields])) {
                    throw ParseError("field " + std::to_string(n_fields + 1) + " is not a number: '" +
                                         line.substr(pos, end - pos) + "'",
                                     line_no);
                }
                ++n_fields;
            }
            pos = line.find_first_not_of(" \t\r\n", end);
            if (pos == std::string::npos) break;
        }
        if (n_fields != 4) {
            throw ParseError("expected 4 fields (frame_id agent_id x y), found " + std::to_string(n_fields), line_no);
        }
        AnnotationRecord rec;
        rec.frame_id = to_exact_long(fields[0], "frame_id", line_no);
        rec.agent_id = to_exact_long(fields[1], "agent_id", line_no);
        rec.x = fields[2];
        rec.y = fields[3];
        if (!seen.insert({rec.frame_id, rec.agent_id}).second) {
            throw ParseError("duplicate (frame_id, agent_id) = (" + std::to_string(rec.frame_id) + ", " +
                                 std::to_string(rec.agent_id) + ")",
                             line_no);
        }
        records.push_back(rec);
    }
    std::sort(records.begin(), records.end(), [](const AnnotationRecord& a, const AnnotationRecord& b) {
        return std::tie(a.frame_id, a.agent_id) < std::tie(b.frame_id, b.agent_id);
    });
    return records;
}

std::vector<AnnotationRecord> parse_annotations_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open annotation file: " + path);
    return parse_annotations(in);
}

std::vector<Scene> build_scenes(const std::vector<AnnotationRecord>& records, int t_in, int t_out, int stride,
                                const std::string& source_set) {
    if (stride < 1) throw ParameterError("build_scenes: stride must be >= 1");
    std::vector<Scene> scenes;
    if (records.empty()) return scenes;

    std::vector<long> frames;
    for (const auto& r : records) {
        if (frames.empty() || frames.back() != r.frame_id) frames.push_back(r.frame_id);
    }
    long step = 0;
    for (std::size_t i = 1; i < frames.size(); ++i) step = step == 0 ? frames[i] - frames[i - 1] : std::min(step, frames[i] - frames[i - 1]);
    if (step <= 0) step = 1;

    // Full arithmetic progression of sampled frames; frames with no records
    // simply have no fully-present agents.
    const long first = frames.front();
    const long n_steps = (frames.back() - first) / step + 1;

    std::unordered_map<long, std::unordered_map<long, std::pair<double, double>>> by_agent;
    for (const auto& r : records) {
        by_agent[r.agent_id][r.frame_id] = {r.x, r.y};
    }
    std::vector<long> agent_order;
    agent_order.reserve(by_agent.size());
    for (const auto& [id, _] : by_agent) agent_order.push_back(id);
    std::sort(agent_order.begin(), agent_order.end());

    const int horizon = t_in + t_out;
    long next_id = 0;
    for (long w = 0; w + horizon <= n_steps; w += stride) {
        const long start_frame = first + w * step;
        std::vector<long> present;
        for (long id : agent_order) {
            const auto& track = by_agent[id];
            bool full = true;
            for (int t = 0; t < horizon && full; ++t) {
                full = track.count(start_frame + static_cast<long>(t) * step) > 0;
            }
            if (full) present.push_back(id);
        }
        if (present.empty()) continue;
        Scene s;
        s.scene_id = next_id++;
        s.agent_ids = present;
        s.source_set = source_set;
        s.first_frame = start_frame;
        s.frame_step = step;
        s.t_in = t_in;
        s.t_out = t_out;
        s.positions.resize(static_cast<std::size_t>(present.size()) * horizon * 2);
        for (std::size_t k = 0; k < present.size(); ++k) {
            const auto& track = by_agent[present[k]];
            for (int t = 0; t < horizon; ++t) {
                const auto& [x, y] = track.at(start_frame + static_cast<long>(t) * step);
                s.pos(static_cast<int>(k), t, 0) = x;
                s.pos(static_cast<int>(k), t, 1) = y;
            }
        }
        scenes.push_back(std::move(s));
    }
    return scenes;
}

std::string scene_to_annotations(const Scene& scene) {
    std::string out;
    for (int t = 0; t < scene.horizon(); ++t) {
        const long frame = scene.first_frame + static_cast<long>(t) * scene.frame_step;
        for (int k = 0; k < scene.agents(); ++k) {
            out += std::to_string(frame);
            out += ' ';
            out += std::to_string(scene.agent_ids[k]);
            out += ' ';
            out += format_double(scene.pos(k, t, 0));
            out += ' ';
            out += format_double(scene.pos(k, t, 1));
            out += '\n';
        }
    }
    return out;
}

SplitSpec make_split(const std::string& test_set, double val_fraction) {
    const auto& names = dataset_names();
    if (std::find(names.begin(), names.end(), test_set) == names.end()) {
        std::string known;
        for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
        throw ParameterError("unknown dataset '" + test_set + "' (expected one of: " + known + ")");
    }
    if (val_fraction < 0.0 || val_fraction >= 1.0) {
        throw ParameterError("val_fraction must be in [0,1), got " + std::to_string(val_fraction));
    }
    SplitSpec spec;
    spec.test_set = test_set;
    spec.val_fraction = val_fraction;
    for (const auto& n : names) {
        if (n != test_set) spec.train_sets.push_back(n);
    }
    spec.val_sets = spec.train_sets;
    return spec;
}

bool is_validation_scene(const Scene& scene, double val_fraction) {
    const std::uint64_t h = splitmix64(static_cast<std::uint64_t>(scene.scene_id) ^ fnv1a(scene.source_set));
    return static_cast<double>(h % 1000000ull) < val_fraction * 1000000.0;
}

std::vector<Scene> load_dataset_dir(const std::string& dir, const std::string& set_name, int stride) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".txt") {
            files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<Scene> scenes;
    for (const auto& f : files) {
        auto records = parse_annotations_file(f);
        auto file_scenes = build_scenes(records, kTIn, kTOut, stride, set_name);
        for (auto& s : file_scenes) {
            s.scene_id = static_cast<long>(scenes.size());
            scenes.push_back(std::move(s));
        }
    }
    return scenes;
}

}  // namespace sstage
