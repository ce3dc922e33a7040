#include "gprar/flow.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace gprar {

FlowField::FlowField(Index frames, Index width, Index height) : data_(Shape{frames, height, width, 2}) {}

Eigen::Vector2d FlowField::at(Index t, Index x, Index y) const {
  return {data_.at({t, y, x, 0}), data_.at({t, y, x, 1})};
}

void FlowField::set(Index t, Index x, Index y, const Eigen::Vector2d& v) {
  data_.at({t, y, x, 0}) = v.x();
  data_.at({t, y, x, 1}) = v.y();
}

void FlowField::fill(Index t, const Eigen::Vector2d& v) {
  for (Index y = 0; y < height(); ++y)
    for (Index x = 0; x < width(); ++x) set(t, x, y, v);
}

std::pair<Index, Index> grid_span(Index extent, Index parts, Index index) {
  const Index step = extent / parts;
  return {index * step, index + 1 == parts ? extent : (index + 1) * step};
}

GridFlow grid_flow(const FlowField& flow) {
  if (flow.width() < kGridCols || flow.height() < kGridRows)
    throw std::invalid_argument("grid_flow: flow image must be at least 4 wide and 3 high");
  GridFlow g;
  g.cells = RowMatrix<double>::Zero(flow.frames(), 2 * kGridCells);
  const auto& d = flow.data().values();
  const Index w = flow.width();
  const Index h = flow.height();
  for (Index t = 0; t < flow.frames(); ++t) {
    for (Index r = 0; r < kGridRows; ++r) {
      const auto [y0, y1] = grid_span(h, kGridRows, r);
      for (Index c = 0; c < kGridCols; ++c) {
        const auto [x0, x1] = grid_span(w, kGridCols, c);
        Eigen::Vector2d acc = Eigen::Vector2d::Zero();
        for (Index y = y0; y < y1; ++y)
          for (Index x = x0; x < x1; ++x) {
            const Index base = ((t * h + y) * w + x) * 2;
            acc += Eigen::Vector2d(d(base), d(base + 1));
          }
        acc /= static_cast<double>((y1 - y0) * (x1 - x0));
        g.cells.block<1, 2>(t, 2 * (r * kGridCols + c)) = acc.transpose();
      }
    }
  }
  return g;
}

namespace {
constexpr std::array<char, 8> kFlowMagic{'G', 'P', 'F', 'L', 'O', 'W', '1', '\0'};
}

void write_flow(const std::filesystem::path& path, const FlowField& flow) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("flow: cannot write " + path.string());
  out.write(kFlowMagic.data(), kFlowMagic.size());
  for (std::int64_t v : {static_cast<std::int64_t>(flow.frames()), static_cast<std::int64_t>(flow.width()),
                         static_cast<std::int64_t>(flow.height())})
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  const auto& vals = flow.data().values();
  out.write(reinterpret_cast<const char*>(vals.data()), static_cast<std::streamsize>(vals.size() * sizeof(double)));
}

FlowField read_flow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("flow: cannot read " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kFlowMagic) throw std::runtime_error("flow: bad header in " + path.string());
  std::int64_t dims[3];
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) throw std::runtime_error("flow: bad dimensions");
  FlowField f(dims[0], dims[1], dims[2]);
  Vector<double> vals(dims[0] * dims[1] * dims[2] * 2);
  in.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(vals.size() * sizeof(double)));
  if (!in) throw std::runtime_error("flow: truncated data in " + path.string());
  for (Index t = 0; t < f.frames(); ++t)
    for (Index y = 0; y < f.height(); ++y)
      for (Index x = 0; x < f.width(); ++x) {
        const Index base = ((t * f.height() + y) * f.width() + x) * 2;
        f.set(t, x, y, {vals(base), vals(base + 1)});
      }
  return f;
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf.data(), ptr);
}

namespace {
std::vector<std::vector<double>> read_csv_rows(std::istream& in, std::size_t columns) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: missing header");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != columns) throw std::runtime_error("csv: expected " + std::to_string(columns) + " columns");
    rows.push_back(std::move(row));
  }
  return rows;
}
}  // namespace

void write_grid_csv(std::ostream& out, const GridFlow& grid) {
  out << "t,cell,dx,dy\n";
  for (Index t = 0; t < grid.frames(); ++t)
    for (Index c = 0; c < kGridCells; ++c) {
      const auto v = grid.cell(t, c);
      out << t << ',' << c << ',' << format_double(v.x()) << ',' << format_double(v.y()) << '\n';
    }
}

GridFlow read_grid_csv(std::istream& in) {
  const auto rows = read_csv_rows(in, 4);
  if (rows.empty() || rows.size() % kGridCells != 0) throw std::runtime_error("grid csv: incomplete frames");
  GridFlow g;
  g.cells = RowMatrix<double>::Zero(static_cast<Index>(rows.size()) / kGridCells, 2 * kGridCells);
  for (const auto& r : rows) {
    const auto t = static_cast<Index>(r[0]);
    const auto c = static_cast<Index>(r[1]);
    if (t < 0 || t >= g.frames() || c < 0 || c >= kGridCells) throw std::runtime_error("grid csv: index out of range");
    g.cells(t, 2 * c) = r[2];
    g.cells(t, 2 * c + 1) = r[3];
  }
  return g;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "t,x,y\n";
  for (Index t = 0; t < traj.rows(); ++t)
    out << t << ',' << format_double(traj(t, 0)) << ',' << format_double(traj(t, 1)) << '\n';
}

Trajectory read_trajectory_csv(std::istream& in) {
  const auto rows = read_csv_rows(in, 3);
  Trajectory traj(static_cast<Index>(rows.size()), 2);
  for (const auto& r : rows) {
    const auto t = static_cast<Index>(r[0]);
    if (t < 0 || t >= traj.rows()) throw std::runtime_error("trajectory csv: index out of range");
    traj(t, 0) = r[1];
    traj(t, 1) = r[2];
  }
  return traj;
}

}  // namespace gprar
