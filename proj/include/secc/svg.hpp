#pragma once

#include <string>
#include <vector>

namespace secc {

// Deterministic static plots: fixed canvas, fixed palette, fixed number
// formatting, so identical inputs yield identical bytes.

struct CurveSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

std::string render_loss_curves(const std::vector<CurveSeries>& series);

struct ScatterPoint {
    double x = 0.0;
    double y = 0.0;
    int color_class = 0; // palette index
    bool unknown = false; // drawn as a cross instead of a dot
};

std::string render_scatter(const std::vector<ScatterPoint>& points);

} // namespace secc
