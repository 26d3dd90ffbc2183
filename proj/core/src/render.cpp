#include "qgrasp/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace qgrasp {

void CameraSpec::validate() const {
    if (std::abs(view_direction.norm() - 1.0) > 1e-9)
        throw std::invalid_argument("camera: view_direction must be unit length");
    if (std::abs(up.norm() - 1.0) > 1e-9)
        throw std::invalid_argument("camera: up must be unit length");
    if (std::abs(view_direction.dot(up)) > 1e-9)
        throw std::invalid_argument("camera: view_direction must be orthogonal to up");
    if (!(scale > 0.0))
        throw std::invalid_argument("camera: scale must be > 0");
}

namespace {

double point_segment_dist(double px, double py, double x0, double y0,
                          double x1, double y1) {
    double dx = x1 - x0, dy = y1 - y0;
    double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0)
        t = std::clamp(((px - x0) * dx + (py - y0) * dy) / len2, 0.0, 1.0);
    double cx = x0 + t * dx, cy = y0 + t * dy;
    return std::hypot(px - cx, py - cy);
}

struct Projector {
    Vec3 right, up, center;
    double scale;
    double half_w, half_h;

    Projector(const CameraSpec& cam, int w, int h)
        : right(cam.view_direction.cross(cam.up)),
          up(cam.up),
          center(cam.center),
          scale(cam.scale),
          half_w(w / 2.0),
          half_h(h / 2.0) {}

    // World point -> pixel coordinates (pixel centers at integer + 0.5).
    void project(const Vec3& p, double& px, double& py) const {
        Vec3 d = p - center;
        px = half_w + d.dot(right) * scale;
        py = half_h - d.dot(up) * scale;
    }

    // Pixel center -> world point on the camera plane.
    Vec3 unproject(int x, int y) const {
        double u = (x + 0.5 - half_w) / scale;
        double v = (half_h - (y + 0.5)) / scale;
        return center + right * u + up * v;
    }
};

}  // namespace

void rasterize_segment(Observation& image, double x0, double y0, double x1,
                       double y1, double thickness, double intensity) {
    int min_x = static_cast<int>(std::floor(std::min(x0, x1) - thickness)) - 1;
    int max_x = static_cast<int>(std::ceil(std::max(x0, x1) + thickness)) + 1;
    int min_y = static_cast<int>(std::floor(std::min(y0, y1) - thickness)) - 1;
    int max_y = static_cast<int>(std::ceil(std::max(y0, y1) + thickness)) + 1;
    min_x = std::max(min_x, 0);
    min_y = std::max(min_y, 0);
    max_x = std::min(max_x, image.width - 1);
    max_y = std::min(max_y, image.height - 1);
    for (int y = min_y; y <= max_y; ++y)
        for (int x = min_x; x <= max_x; ++x)
            if (point_segment_dist(x + 0.5, y + 0.5, x0, y0, x1, y1) <= thickness)
                image.at(x, y) = intensity;
}

Observation render(const WorldState& world, const KinematicChain& chain,
                   const CameraSpec& camera, int width, int height,
                   const RenderStyle& style) {
    camera.validate();
    if (width <= 0 || height <= 0)
        throw std::invalid_argument("render: image size must be positive");

    Observation img;
    img.width = width;
    img.height = height;
    img.pixels.assign(static_cast<size_t>(width) * height, style.background);

    Projector proj(camera, width, height);

    // Table: pixels whose camera-plane point lies below the table surface.
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (proj.unproject(x, y).y < 0.0) img.at(x, y) = style.table;

    FkResult fk = forward_kinematics(chain, world.arm);
    for (size_t k = 0; k + 1 < fk.segment_endpoints.size(); ++k) {
        double x0, y0, x1, y1;
        proj.project(fk.segment_endpoints[k], x0, y0);
        proj.project(fk.segment_endpoints[k + 1], x1, y1);
        rasterize_segment(img, x0, y0, x1, y1, style.arm_thickness_px, style.arm);
    }

    double gx, gy;
    proj.project(fk.gripper_point, gx, gy);
    rasterize_segment(img, gx, gy, gx, gy, style.gripper_radius_px,
                      world.arm.gripper_closed ? style.gripper_closed
                                               : style.gripper_open);

    // Cube on top: projected filled square around its center.
    double cx, cy;
    proj.project(world.cube.position, cx, cy);
    double half = world.cube.half_extent * camera.scale;
    int min_x = std::max(static_cast<int>(std::floor(cx - half)), 0);
    int max_x = std::min(static_cast<int>(std::ceil(cx + half)), width - 1);
    int min_y = std::max(static_cast<int>(std::floor(cy - half)), 0);
    int max_y = std::min(static_cast<int>(std::ceil(cy + half)), height - 1);
    for (int y = min_y; y <= max_y; ++y)
        for (int x = min_x; x <= max_x; ++x)
            if (std::abs(x + 0.5 - cx) <= half && std::abs(y + 0.5 - cy) <= half)
                img.at(x, y) = style.cube;

    return img;
}

void write_pgm(const Observation& obs, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_pgm: cannot open " + path);
    f << "P5\n" << obs.width << " " << obs.height << "\n255\n";
    for (double v : obs.pixels) {
        double clamped = std::clamp(v, 0.0, 1.0);
        f.put(static_cast<char>(
            static_cast<std::uint8_t>(std::lround(clamped * 255.0))));
    }
    if (!f) throw std::runtime_error("write_pgm: write failed for " + path);
}

Observation read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_pgm: cannot open " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    f >> magic >> w >> h >> maxval;
    if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255)
        throw std::runtime_error("read_pgm: unsupported graymap header in " + path);
    f.get();  // single whitespace after header
    Observation obs;
    obs.width = w;
    obs.height = h;
    obs.pixels.resize(static_cast<size_t>(w) * h);
    for (double& v : obs.pixels) {
        int c = f.get();
        if (c == EOF) throw std::runtime_error("read_pgm: truncated file " + path);
        v = static_cast<double>(c) / 255.0;
    }
    return obs;
}

}  // namespace qgrasp
