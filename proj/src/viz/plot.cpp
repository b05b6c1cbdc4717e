#include "physsym/viz.hpp"

#include "font.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace physsym {

int PlotStyle::width_px() const { return static_cast<int>(std::lround(width_in * dpi)); }
int PlotStyle::height_px() const { return static_cast<int>(std::lround(height_in * dpi)); }

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height)
{
    if (width <= 0 || height <= 0) {
        throw std::invalid_argument("image dimensions must be positive");
    }
    pixels_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
    for (std::size_t i = 0; i < pixels_.size(); i += 3) {
        pixels_[i] = fill.r;
        pixels_[i + 1] = fill.g;
        pixels_[i + 2] = fill.b;
    }
}

Rgb Image::at(int x, int y) const
{
    auto const i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

void Image::set(int x, int y, Rgb c)
{
    if (x < 0 || y < 0 || x >= width_ || y >= height_) {
        return;
    }
    auto const i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
}

void Image::blend(int x, int y, Rgb c, double alpha)
{
    if (x < 0 || y < 0 || x >= width_ || y >= height_ || alpha <= 0.0) {
        return;
    }
    alpha = std::min(alpha, 1.0);
    Rgb const old = at(x, y);
    auto mix = [alpha](std::uint8_t a, std::uint8_t b) {
        return static_cast<std::uint8_t>(std::lround(a * (1.0 - alpha) + b * alpha));
    };
    set(x, y, {mix(old.r, c.r), mix(old.g, c.g), mix(old.b, c.b)});
}

std::vector<double> nice_ticks(double lo, double hi, int target)
{
    if (!(hi > lo) || target < 1) {
        return {lo};
    }
    double const raw = (hi - lo) / target;
    double const mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = 10.0 * mag;
    for (double const m : {1.0, 2.0, 5.0}) {
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    }
    std::vector<double> ticks;
    for (double k = std::ceil(lo / step - 1e-9); k * step <= hi + 1e-9 * step; k += 1.0) {
        double const v = k * step;
        ticks.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
    }
    return ticks;
}

namespace {

void require_plottable(const Trajectory& traj)
{
    if (traj.size() < 2) {
        throw EmptyTrajectory("need at least 2 samples to plot, got " + std::to_string(traj.size()));
    }
}

std::pair<double, double> padded_range(const std::vector<double>& values, double fraction)
{
    auto const [mn, mx] = std::minmax_element(values.begin(), values.end());
    double lo = *mn;
    double hi = *mx;
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        throw std::invalid_argument("cannot plot non-finite data");
    }
    double span = hi - lo;
    if (span <= 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)))) {
        span = std::max(1.0, std::abs(lo));
        lo -= span / 2.0;
        hi += span / 2.0;
    }
    double const pad = fraction * span;
    return {lo - pad, hi + pad};
}

PlotData make_data(std::vector<double> xs, std::vector<double> ys, std::string xl, std::string yl, const PlotStyle& style)
{
    PlotData d;
    std::tie(d.x_lo, d.x_hi) = padded_range(xs, style.padding_fraction);
    std::tie(d.y_lo, d.y_hi) = padded_range(ys, style.padding_fraction);
    d.xs = std::move(xs);
    d.ys = std::move(ys);
    d.x_label = std::move(xl);
    d.y_label = std::move(yl);
    return d;
}

std::string tick_label(double value, double step)
{
    char buf[48];
    double const mag = std::max(std::abs(value), std::abs(step));
    if (mag >= 1e5 || (mag < 1e-3 && mag > 0)) {
        std::snprintf(buf, sizeof buf, "%.2g", value);
    } else {
        int const decimals = std::max(0, static_cast<int>(-std::floor(std::log10(step) + 1e-9)));
        std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    }
    std::string s = buf;
    if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') {
        s.erase(0, 1);
    }
    return s;
}

struct Frame {
    int left, right, top, bottom;
    double x_lo, x_hi, y_lo, y_hi;

    double px(double x) const { return left + (x - x_lo) / (x_hi - x_lo) * (right - left); }
    double py(double y) const { return bottom - (y - y_lo) / (y_hi - y_lo) * (bottom - top); }
};

void fill_rect(Image& img, int x0, int y0, int x1, int y1, Rgb c)
{
    for (int y = std::max(0, y0); y < std::min(img.height(), y1); ++y) {
        for (int x = std::max(0, x0); x < std::min(img.width(), x1); ++x) {
            img.set(x, y, c);
        }
    }
}

int text_width(const std::string& s, int scale) { return static_cast<int>(s.size()) * 6 * scale - scale; }

void draw_text(Image& img, const std::string& s, int x, int y, int scale, Rgb c)
{
    for (char const ch : s) {
        if (const auto* g = detail::find_glyph(ch)) {
            for (int row = 0; row < 7; ++row) {
                for (int col = 0; col < 5; ++col) {
                    if ((g->rows[static_cast<std::size_t>(row)] >> (4 - col)) & 1) {
                        fill_rect(img, x + col * scale, y + row * scale, x + (col + 1) * scale, y + (row + 1) * scale, c);
                    }
                }
            }
        }
        x += 6 * scale;
    }
}

// Antialiased polyline of the given radius, clipped to the frame. Coverage
// is max-combined so overlapping segments do not darken the joints.
void draw_polyline(Image& img, const Frame& f, const std::vector<double>& xs, const std::vector<double>& ys,
                   double radius, Rgb color)
{
    int const w = f.right - f.left;
    int const h = f.bottom - f.top;
    std::vector<float> cover(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0f);
    auto segment = [&](double ax, double ay, double bx, double by) {
        int const x0 = std::max(f.left, static_cast<int>(std::floor(std::min(ax, bx) - radius - 1)));
        int const x1 = std::min(f.right, static_cast<int>(std::ceil(std::max(ax, bx) + radius + 1)));
        int const y0 = std::max(f.top, static_cast<int>(std::floor(std::min(ay, by) - radius - 1)));
        int const y1 = std::min(f.bottom, static_cast<int>(std::ceil(std::max(ay, by) + radius + 1)));
        double const dx = bx - ax;
        double const dy = by - ay;
        double const len2 = dx * dx + dy * dy;
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                double const cx = x + 0.5;
                double const cy = y + 0.5;
                double u = len2 > 0 ? ((cx - ax) * dx + (cy - ay) * dy) / len2 : 0.0;
                u = std::clamp(u, 0.0, 1.0);
                double const ex = cx - (ax + u * dx);
                double const ey = cy - (ay + u * dy);
                double const d = std::sqrt(ex * ex + ey * ey);
                auto const c = static_cast<float>(std::clamp(radius + 0.5 - d, 0.0, 1.0));
                float& slot = cover[static_cast<std::size_t>(y - f.top) * static_cast<std::size_t>(w) +
                                    static_cast<std::size_t>(x - f.left)];
                slot = std::max(slot, c);
            }
        }
    };
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        segment(f.px(xs[i]), f.py(ys[i]), f.px(xs[i + 1]), f.py(ys[i + 1]));
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float const c = cover[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)];
            if (c > 0.0f) {
                img.blend(f.left + x, f.top + y, color, c);
            }
        }
    }
}

}  // namespace

PlotData phase_plot_data(const Trajectory& traj, const PlotStyle& style)
{
    require_plottable(traj);
    return make_data(traj.x, traj.v, "x", "v", style);
}

PlotData time_series_data(const Trajectory& traj, const PlotStyle& style)
{
    require_plottable(traj);
    return make_data(traj.t, traj.x, "t", "x", style);
}

Image rasterize(const PlotData& data, const PlotStyle& style)
{
    int const W = style.width_px();
    int const H = style.height_px();
    Image img(W, H, style.background);
    Frame const f{static_cast<int>(std::lround(style.margin_left * W)),
                  W - static_cast<int>(std::lround(style.margin_right * W)),
                  static_cast<int>(std::lround(style.margin_top * H)),
                  H - static_cast<int>(std::lround(style.margin_bottom * H)),
                  data.x_lo, data.x_hi, data.y_lo, data.y_hi};
    if (f.right - f.left < 4 || f.bottom - f.top < 4) {
        throw std::invalid_argument("plot area too small for the figure size");
    }
    int const stroke = std::max(1, style.dpi / 150);
    int const text = std::max(1, style.dpi / 75);
    int const tick_len = 4 * stroke;

    auto const xticks = nice_ticks(data.x_lo, data.x_hi);
    auto const yticks = nice_ticks(data.y_lo, data.y_hi);
    double const xstep = xticks.size() > 1 ? xticks[1] - xticks[0] : 1.0;
    double const ystep = yticks.size() > 1 ? yticks[1] - yticks[0] : 1.0;

    if (style.grid) {
        for (double const t : xticks) {
            int const x = static_cast<int>(std::lround(f.px(t)));
            fill_rect(img, x - stroke / 2, f.top, x - stroke / 2 + stroke, f.bottom, style.grid_color);
        }
        for (double const t : yticks) {
            int const y = static_cast<int>(std::lround(f.py(t)));
            fill_rect(img, f.left, y - stroke / 2, f.right, y - stroke / 2 + stroke, style.grid_color);
        }
    }

    double const radius = style.line_width_pt * style.dpi / 72.0 / 2.0;
    draw_polyline(img, f, data.xs, data.ys, radius, style.line);

    // frame
    fill_rect(img, f.left - stroke, f.top - stroke, f.right + stroke, f.top, style.axes);
    fill_rect(img, f.left - stroke, f.bottom, f.right + stroke, f.bottom + stroke, style.axes);
    fill_rect(img, f.left - stroke, f.top, f.left, f.bottom, style.axes);
    fill_rect(img, f.right, f.top, f.right + stroke, f.bottom, style.axes);

    int const glyph_h = 7 * text;
    int max_ylabel = 0;
    for (double const t : xticks) {
        int const x = static_cast<int>(std::lround(f.px(t)));
        fill_rect(img, x - stroke / 2, f.bottom + stroke, x - stroke / 2 + stroke, f.bottom + stroke + tick_len, style.axes);
        auto const label = tick_label(t, xstep);
        draw_text(img, label, x - text_width(label, text) / 2, f.bottom + stroke + tick_len + 2 * text, text, style.axes);
    }
    for (double const t : yticks) {
        int const y = static_cast<int>(std::lround(f.py(t)));
        fill_rect(img, f.left - stroke - tick_len, y - stroke / 2, f.left - stroke, y - stroke / 2 + stroke, style.axes);
        auto const label = tick_label(t, ystep);
        int const tw = text_width(label, text);
        max_ylabel = std::max(max_ylabel, tw);
        draw_text(img, label, f.left - stroke - tick_len - 2 * text - tw, y - glyph_h / 2, text, style.axes);
    }

    int const label_scale = text + text / 2;
    int const xl_y = f.bottom + stroke + tick_len + 4 * text + glyph_h;
    draw_text(img, data.x_label, (f.left + f.right - text_width(data.x_label, label_scale)) / 2, xl_y, label_scale,
              style.axes);
    int const yl_x = f.left - stroke - tick_len - 4 * text - max_ylabel - text_width(data.y_label, label_scale);
    draw_text(img, data.y_label, std::max(0, yl_x), (f.top + f.bottom - 7 * label_scale) / 2, label_scale, style.axes);
    return img;
}

std::vector<std::uint8_t> render_phase_portrait(const Trajectory& traj, const PlotStyle& style)
{
    return encode_png(rasterize(phase_plot_data(traj, style), style), style.dpi);
}

std::vector<std::uint8_t> render_time_series(const Trajectory& traj, const PlotStyle& style)
{
    return encode_png(rasterize(time_series_data(traj, style), style), style.dpi);
}

std::array<std::filesystem::path, 2> write_instance_plots(const std::string& id, const Trajectory& traj,
                                                          const std::filesystem::path& dir, const PlotStyle& style)
{
    std::array<std::filesystem::path, 2> const paths{dir / (id + "_phase.png"), dir / (id + "_traj.png")};
    std::array<std::vector<std::uint8_t>, 2> const bytes{render_phase_portrait(traj, style),
                                                         render_time_series(traj, style)};
    for (std::size_t i = 0; i < 2; ++i) {
        std::ofstream out(paths[i], std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes[i].data()), static_cast<std::streamsize>(bytes[i].size()));
        if (!out) {
            throw std::runtime_error("cannot write " + paths[i].string());
        }
    }
    return paths;
}

}  // namespace physsym
