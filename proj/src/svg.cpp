#include "sstage/svg.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace sstage {

namespace {

struct Bounds {
    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    void update(double x, double y) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
    }
};

std::string agent_color(int k, int agents) {
    const int hue = agents > 0 ? (360 * k) / agents : 0;
    return "hsl(" + std::to_string(hue) + ",70%,40%)";
}

}  // namespace

std::string render_prediction_svg(const PredictionSet& pred, const Scene& scene, int width, int height) {
    const auto abs = to_absolute(pred, scene);
    const int k_n = pred.agents, m_n = pred.modes, t_out = pred.t_out;

    Bounds b;
    for (int k = 0; k < k_n; ++k) {
        for (int t = 0; t < scene.t_in; ++t) b.update(scene.pos(k, t, 0), scene.pos(k, t, 1));
    }
    for (int m = 0; m < m_n; ++m) {
        for (int t = 0; t < t_out; ++t) {
            for (int k = 0; k < k_n; ++k) {
                b.update(abs[((static_cast<std::size_t>(m) * t_out + t) * 2 + 0) * k_n + k],
                         abs[((static_cast<std::size_t>(m) * t_out + t) * 2 + 1) * k_n + k]);
            }
        }
    }
    const double span_x = std::max(b.max_x - b.min_x, 1e-6);
    const double span_y = std::max(b.max_y - b.min_y, 1e-6);
    const double margin = 24.0;
    const double scale = std::min((width - 2 * margin) / span_x, (height - 2 * margin) / span_y);
    auto px = [&](double x) { return margin + (x - b.min_x) * scale; };
    // SVG y grows downward; flip so north stays up.
    auto py = [&](double y) { return height - margin - (y - b.min_y) * scale; };

    std::ostringstream svg;
    svg.setf(std::ios::fixed);
    svg.precision(2);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (int k = 0; k < k_n; ++k) {
        const std::string color = agent_color(k, k_n);
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (int t = 0; t < scene.t_in; ++t) {
            svg << px(scene.pos(k, t, 0)) << "," << py(scene.pos(k, t, 1)) << (t + 1 < scene.t_in ? " " : "");
        }
        svg << "\"/>\n";
        for (int m = 0; m < m_n; ++m) {
            svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" stroke-dasharray=\"6 4\""
                << " stroke-opacity=\"" << pred.prob(m, k) << "\" points=\"";
            // Anchor the mode at the last observed point for continuity.
            svg << px(scene.pos(k, scene.t_in - 1, 0)) << "," << py(scene.pos(k, scene.t_in - 1, 1));
            for (int t = 0; t < t_out; ++t) {
                svg << " " << px(abs[((static_cast<std::size_t>(m) * t_out + t) * 2 + 0) * k_n + k]) << ","
                    << py(abs[((static_cast<std::size_t>(m) * t_out + t) * 2 + 1) * k_n + k]);
            }
            svg << "\"/>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_prediction_svg(const std::string& path, const PredictionSet& pred, const Scene& scene) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write SVG: " + path);
    out << render_prediction_svg(pred, scene);
}

}  // namespace sstage
