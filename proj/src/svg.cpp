#include "secc/svg.hpp"

#include "secc/textio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace secc {

namespace {

constexpr int kWidth = 720;
constexpr int kHeight = 480;
constexpr int kMargin = 48;

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                          "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr int kPaletteSize = 10;

struct Range {
    double lo = 0.0;
    double hi = 1.0;
};

Range pad_range(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) return {0.0, 1.0};
    if (lo == hi) return {lo - 1.0, hi + 1.0};
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

double sx(double x, const Range& r) {
    return kMargin + (x - r.lo) / (r.hi - r.lo) * (kWidth - 2 * kMargin);
}

double sy(double y, const Range& r) {
    return kHeight - kMargin - (y - r.lo) / (r.hi - r.lo) * (kHeight - 2 * kMargin);
}

void open_svg(std::ostringstream& out) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    out << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
    out << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kWidth - 2 * kMargin
        << "\" height=\"" << kHeight - 2 * kMargin
        << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
}

} // namespace

std::string render_loss_curves(const std::vector<CurveSeries>& series) {
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
    double ylo = xlo, yhi = -xlo;
    for (const CurveSeries& s : series) {
        for (double v : s.x) {
            xlo = std::min(xlo, v);
            xhi = std::max(xhi, v);
        }
        for (double v : s.y) {
            ylo = std::min(ylo, v);
            yhi = std::max(yhi, v);
        }
    }
    const Range xr = pad_range(xlo, xhi);
    const Range yr = pad_range(ylo, yhi);

    std::ostringstream out;
    open_svg(out);
    int color = 0;
    int legend_y = kMargin + 14;
    for (const CurveSeries& s : series) {
        const char* stroke = kPalette[color % kPaletteSize];
        ++color;
        if (!s.x.empty()) {
            out << "<polyline fill=\"none\" stroke=\"" << stroke
                << "\" stroke-width=\"1.5\" points=\"";
            for (size_t i = 0; i < s.x.size(); ++i) {
                out << (i ? " " : "") << fmt6(sx(s.x[i], xr)) << ',' << fmt6(sy(s.y[i], yr));
            }
            out << "\"/>\n";
        }
        out << "<text x=\"" << kWidth - kMargin - 110 << "\" y=\"" << legend_y
            << "\" font-family=\"monospace\" font-size=\"11\" fill=\"" << stroke << "\">" << s.name
            << "</text>\n";
        legend_y += 14;
    }
    out << "</svg>\n";
    return out.str();
}

std::string render_scatter(const std::vector<ScatterPoint>& points) {
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
    double ylo = xlo, yhi = -xlo;
    for (const ScatterPoint& p : points) {
        xlo = std::min(xlo, p.x);
        xhi = std::max(xhi, p.x);
        ylo = std::min(ylo, p.y);
        yhi = std::max(yhi, p.y);
    }
    const Range xr = pad_range(xlo, xhi);
    const Range yr = pad_range(ylo, yhi);

    std::ostringstream out;
    open_svg(out);
    for (const ScatterPoint& p : points) {
        const double cx = sx(p.x, xr);
        const double cy = sy(p.y, yr);
        const char* color = kPalette[((p.color_class % kPaletteSize) + kPaletteSize) % kPaletteSize];
        if (p.unknown) {
            out << "<path d=\"M " << fmt6(cx - 3) << ' ' << fmt6(cy - 3) << " L " << fmt6(cx + 3)
                << ' ' << fmt6(cy + 3) << " M " << fmt6(cx - 3) << ' ' << fmt6(cy + 3) << " L "
                << fmt6(cx + 3) << ' ' << fmt6(cy - 3) << "\" stroke=\"" << color
                << "\" stroke-width=\"1.5\"/>\n";
        } else {
            out << "<circle cx=\"" << fmt6(cx) << "\" cy=\"" << fmt6(cy)
                << "\" r=\"2.5\" fill=\"" << color << "\" fill-opacity=\"0.75\"/>\n";
        }
    }
    out << "</svg>\n";
    return out.str();
}

} // namespace secc
