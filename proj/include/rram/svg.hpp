#pragma once

#include <string>
#include <vector>

namespace rram::svg {

enum class Style { Line, Scatter, Steps, Bars };

struct Series {
  std::string name;
  std::vector<double> x, y;
  Style style = Style::Line;
  std::string color;  // empty picks from the palette
};

struct Plot {
  std::string title, x_label, y_label;
  bool log_x = false, log_y = false;
  bool equal_aspect = false;
  int width = 640, height = 420;
  std::vector<Series> series;

  Series& add(std::string name, std::vector<double> x, std::vector<double> y, Style style = Style::Line);
  std::string render() const;
  void save(const std::string& path) const;
};

}  // namespace rram::svg
