#pragma once

#include "physsym/sim.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace physsym {

struct Rgb {
    std::uint8_t r, g, b;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct PlotStyle {
    int dpi = 300;
    double width_in = 4.0;
    double height_in = 3.0;
    bool grid = true;
    double line_width_pt = 1.5;
    double padding_fraction = 0.05;  // of the data span, on each side
    // outer margins as fractions of the figure
    double margin_left = 0.17;
    double margin_right = 0.04;
    double margin_top = 0.05;
    double margin_bottom = 0.15;
    Rgb background{255, 255, 255};
    Rgb line{31, 119, 180};
    Rgb axes{0, 0, 0};
    Rgb grid_color{222, 222, 222};

    int width_px() const;
    int height_px() const;
};

class EmptyTrajectory : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// What gets drawn, in data coordinates.
struct PlotData {
    std::vector<double> xs;
    std::vector<double> ys;
    double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;  // padded view box
    std::string x_label;
    std::string y_label;
};

PlotData phase_plot_data(const Trajectory& traj, const PlotStyle& style = {});
PlotData time_series_data(const Trajectory& traj, const PlotStyle& style = {});

/// 8-bit RGB raster.
class Image {
public:
    Image(int width, int height, Rgb fill);
    int width() const { return width_; }
    int height() const { return height_; }
    Rgb at(int x, int y) const;
    void set(int x, int y, Rgb c);
    void blend(int x, int y, Rgb c, double alpha);
    const std::vector<std::uint8_t>& pixels() const { return pixels_; }

private:
    int width_;
    int height_;
    std::vector<std::uint8_t> pixels_;
};

Image rasterize(const PlotData& data, const PlotStyle& style);

/// PNG without time or text chunks; pHYs carries the DPI.
std::vector<std::uint8_t> encode_png(const Image& image, int dpi);

std::vector<std::uint8_t> render_phase_portrait(const Trajectory& traj, const PlotStyle& style = {});
std::vector<std::uint8_t> render_time_series(const Trajectory& traj, const PlotStyle& style = {});

/// Writes <id>_phase.png and <id>_traj.png into dir; returns both paths.
std::array<std::filesystem::path, 2> write_instance_plots(const std::string& id, const Trajectory& traj,
                                                          const std::filesystem::path& dir,
                                                          const PlotStyle& style = {});

/// Tick positions covering [lo, hi] at a 1-2-5 step.
std::vector<double> nice_ticks(double lo, double hi, int target = 5);

}  // namespace physsym
