#pragma once

#include <string>
#include <vector>

#include "qgrasp/geom.hpp"
#include "qgrasp/sim.hpp"

namespace qgrasp {

// Orthographic camera. right = view_direction x up spans the image x axis.
struct CameraSpec {
    Vec3 view_direction{0, 0, -1};
    Vec3 up{0, 1, 0};
    Vec3 center{0.3, 0.3, 0.0};
    double scale = 64.0;  // pixels per meter

    void validate() const;
};

// Grayscale image, row-major, intensities in [0, 1].
struct Observation {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    double at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
    double& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
};

struct RenderStyle {
    double background = 0.0;
    double table = 0.2;
    double arm = 0.6;
    double gripper_open = 0.5;
    double gripper_closed = 0.9;
    double cube = 1.0;
    double arm_thickness_px = 1.5;
    double gripper_radius_px = 2.0;
};

void rasterize_segment(Observation& image, double x0, double y0, double x1,
                       double y1, double thickness, double intensity);

Observation render(const WorldState& world, const KinematicChain& chain,
                   const CameraSpec& camera, int width, int height,
                   const RenderStyle& style = {});

// Binary portable graymap (P5, 8-bit, intensity*255 rounded to nearest).
void write_pgm(const Observation& obs, const std::string& path);
Observation read_pgm(const std::string& path);

}  // namespace qgrasp
