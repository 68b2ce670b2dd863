#pragma once

// Pose prediction files: `# dcap-poses v1` header declaring the reference
// frame ("tractor" for calibration-style outputs, "world" for raw
// reconstruction-style ones), then one `seq frame camera pose` line per
// entry using the canonical 7-number pose serialization.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dcap/errors.hpp"
#include "dcap/geom.hpp"
#include "dcap/kinematics.hpp"
#include "dcap/util.hpp"

namespace dcap {

enum class PoseFrame { tractor, world };

struct PoseEntry {
    std::string sequence_id;
    std::int64_t frame_index = 0;
    CameraId camera = CameraId::rear;
    Pose pose;
};

struct PoseFile {
    PoseFrame frame = PoseFrame::tractor;
    std::string method = "unknown";
    std::vector<PoseEntry> entries;
};

inline void write_poses(const PoseFile& file, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    f << "# dcap-poses v1\n";
    f << "# frame: " << (file.frame == PoseFrame::tractor ? "tractor" : "world") << "\n";
    f << "# method: " << file.method << "\n";
    for (const PoseEntry& e : file.entries)
        f << e.sequence_id << ' ' << e.frame_index << ' ' << camera_name(e.camera) << ' '
          << pose_to_string(e.pose) << '\n';
}

inline PoseFile read_poses(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path.string());
    PoseFile file;
    std::string line;
    long line_no = 0;
    bool versioned = false;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.rfind("# dcap-poses", 0) == 0) {
            if (line != "# dcap-poses v1")
                throw FormatVersionMismatch("unsupported poses file: " + line);
            versioned = true;
            continue;
        }
        if (line.rfind("# frame: ", 0) == 0) {
            std::string kind = line.substr(9);
            if (kind == "tractor")
                file.frame = PoseFrame::tractor;
            else if (kind == "world")
                file.frame = PoseFrame::world;
            else
                throw CorruptRecord("unknown pose frame '" + kind + "'", line_no);
            continue;
        }
        if (line.rfind("# method: ", 0) == 0) {
            file.method = line.substr(10);
            continue;
        }
        if (line.empty() || line[0] == '#') continue;
        std::istringstream in(line);
        PoseEntry e;
        std::string cam;
        double w, x, y, z, tx, ty, tz;
        if (!(in >> e.sequence_id >> e.frame_index >> cam >> w >> x >> y >> z >> tx >> ty >> tz))
            throw CorruptRecord("bad pose record", line_no);
        e.camera = camera_from_name(cam);
        e.pose = {{w, x, y, z}, {tx, ty, tz}};
        file.entries.push_back(std::move(e));
    }
    if (!versioned) throw FormatVersionMismatch("missing dcap-poses header in " + path.string());
    return file;
}

}  // namespace dcap
