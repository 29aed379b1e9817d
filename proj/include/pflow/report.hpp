#pragma once

#include <initializer_list>
#include <string>
#include <vector>

namespace pflow {

/// Shortest round-trip decimal representation; '.' separator regardless of locale.
std::string fmt_real(double v);
std::string fmt_int(long long v);

/// Comma-separated rows with a header line. Fields are written verbatim.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header, std::vector<std::string> comments = {});
    void row(const std::vector<std::string>& fields);
    std::string str() const { return out_; }
    std::size_t columns() const noexcept { return columns_; }

private:
    std::string out_;
    std::size_t columns_;
};

void write_text_file(const std::string& path, const std::string& text);

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct LineChart {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;
    std::vector<PlotSeries> series;
};

/// Minimal polyline chart as a standalone SVG document.
std::string render_svg(const LineChart& chart);

}  // namespace pflow
