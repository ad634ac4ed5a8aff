#include "qp/path.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace qp {

void DiscretePath::validate() const {
  if (segments() < 1) throw std::invalid_argument("path needs at least one segment");
  if (!(horizon > 0.0)) throw std::invalid_argument("path horizon must be positive");
  const int d = dim();
  for (const Vector& p : nodes) {
    if (static_cast<int>(p.size()) != d)
      throw std::invalid_argument("path nodes have inconsistent dimensions");
    if (!p.allFinite()) throw std::invalid_argument("path node is not finite");
  }
}

DiscretePath DiscretePath::straight_line(const Vector& from, const Vector& to,
                                         int n_segments, double horizon) {
  if (n_segments < 1) throw std::invalid_argument("n_segments must be >= 1");
  DiscretePath p;
  p.horizon = horizon;
  p.nodes.reserve(static_cast<std::size_t>(n_segments) + 1);
  for (int k = 0; k <= n_segments; ++k) {
    const double t = static_cast<double>(k) / n_segments;
    p.nodes.push_back((1.0 - t) * from + t * to);
  }
  return p;
}

void write_path_csv(std::ostream& os, const DiscretePath& path) {
  const int d = path.dim();
  os << "t";
  for (int i = 1; i <= d; ++i) os << ",x" << i;
  os << "\n";
  char buf[32];
  const double dt = path.dt();
  for (int k = 0; k < static_cast<int>(path.nodes.size()); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", k * dt);
    os << buf;
    for (int i = 0; i < d; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", path.nodes[static_cast<std::size_t>(k)][i]);
      os << ',' << buf;
    }
    os << "\n";
  }
}

DiscretePath read_path_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("path csv: missing header");
  DiscretePath p;
  double t_last = 0.0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() < 2) throw std::runtime_error("path csv: short row");
    t_last = row[0];
    Vector x(static_cast<int>(row.size()) - 1);
    for (std::size_t i = 1; i < row.size(); ++i) x[static_cast<int>(i - 1)] = row[i];
    p.nodes.push_back(std::move(x));
  }
  if (p.nodes.size() < 2) throw std::runtime_error("path csv: needs at least two rows");
  p.horizon = t_last;
  p.validate();
  return p;
}

}  // namespace qp
