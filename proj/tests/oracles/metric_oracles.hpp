#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <vector>

namespace gmseg::oracle {

// Plain binary image used by the oracles; no library types involved.
struct Bin {
  int h = 0, w = 0;
  std::vector<int> v;
  int at(int y, int x) const { return (y < 0 || x < 0 || y >= h || x >= w) ? 0 : v[y * w + x]; }
};

using Opt = std::optional<double>;

// 2x2 class matrix n[gold][pred], accumulated pixel by pixel.
inline std::array<std::array<double, 2>, 2> class_matrix(const Bin& pred, const Bin& gold) {
  std::array<std::array<double, 2>, 2> n{};
  for (int i = 0; i < pred.h * pred.w; ++i) n[gold.v[i] ? 1 : 0][pred.v[i] ? 1 : 0] += 1.0;
  return n;
}

struct OverlapOracle {
  Opt dsc, ji, tpr, tnr, ppv, cc;
};

inline OverlapOracle overlap(const Bin& pred, const Bin& gold) {
  const auto n = class_matrix(pred, gold);
  const double tp = n[1][1], fn = n[1][0], fp = n[0][1], tn = n[0][0];
  OverlapOracle o;
  if (tp + fp + fn > 0) {
    o.dsc = 2 * tp / (2 * tp + fp + fn);
    o.ji = tp / (tp + fp + fn);
  }
  if (tp + fn > 0) o.tpr = 100 * tp / (tp + fn);
  if (tn + fp > 0) o.tnr = 100 * tn / (tn + fp);
  if (tp + fp > 0) o.ppv = 100 * tp / (tp + fp);
  if (tp > 0) o.cc = 100 * (tp - fp - fn) / tp;
  return o;
}

// Two-class semantic-segmentation scores written per class c in {0, 1}.
struct ClassOracle {
  Opt dice, mean_accuracy, pixel_accuracy, recall, precision, fwiu, mean_iu;
};

inline ClassOracle per_class(const Bin& pred, const Bin& gold) {
  const auto n = class_matrix(pred, gold);
  double total = 0, correct = 0;
  std::array<double, 2> t{}, col{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      total += n[i][j];
      t[i] += n[i][j];
      col[j] += n[i][j];
      if (i == j) correct += n[i][j];
    }
  ClassOracle o;
  if (total > 0) o.pixel_accuracy = correct / total;
  std::array<Opt, 2> acc, iu;
  for (int c = 0; c < 2; ++c) {
    if (t[c] > 0) acc[c] = n[c][c] / t[c];
    const double uni = t[c] + col[c] - n[c][c];
    if (uni > 0) iu[c] = n[c][c] / uni;
  }
  if (acc[0] && acc[1]) o.mean_accuracy = (*acc[0] + *acc[1]) / 2;
  if (iu[0] && iu[1]) o.mean_iu = (*iu[0] + *iu[1]) / 2;
  if (total > 0) {
    double s = 0;
    for (int c = 0; c < 2; ++c)
      if (t[c] > 0) s += t[c] * *iu[c];
    o.fwiu = s / total;
  }
  const double tp = n[1][1];
  if (2 * tp + n[0][1] + n[1][0] > 0) o.dice = 2 * tp / (2 * tp + n[0][1] + n[1][0]);
  if (t[1] > 0) o.recall = tp / t[1];
  if (col[1] > 0) o.precision = tp / col[1];
  return o;
}

// Boundary = mask minus its erosion by a 4-neighbour cross, with the image
// padded by background.
inline Bin boundary(const Bin& m) {
  Bin out{m.h, m.w, std::vector<int>(m.v.size(), 0)};
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      const int eroded = m.at(y, x) & m.at(y - 1, x) & m.at(y + 1, x) & m.at(y, x - 1) & m.at(y, x + 1);
      out.v[y * m.w + x] = m.at(y, x) && !eroded;
    }
  return out;
}

struct Pt {
  double y, x, z;
};

inline std::vector<Pt> points(const Bin& m, double z = 0) {
  std::vector<Pt> p;
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x)
      if (m.v[y * m.w + x]) p.push_back({double(y), double(x), z});
  return p;
}

struct DistanceOracle {
  Opt mean, max, median;
};

// Exhaustive pairwise distances; for each point the nearest point of the
// other set, both directions pooled.
inline DistanceOracle pairwise(const std::vector<Pt>& a, const std::vector<Pt>& b, double sy, double sx,
                               double sz = 1.0) {
  DistanceOracle o;
  if (a.empty() || b.empty()) return o;
  std::vector<double> all;
  auto nearest = [&](const std::vector<Pt>& from, const std::vector<Pt>& to) {
    for (const auto& p : from) {
      double best = 1e300;
      for (const auto& q : to) {
        const double d = std::hypot((p.y - q.y) * sy, (p.x - q.x) * sx, (p.z - q.z) * sz);
        best = std::min(best, d);
      }
      all.push_back(best);
    }
  };
  nearest(a, b);
  nearest(b, a);
  long double sum = 0;
  for (double d : all) sum += d;
  o.mean = static_cast<double>(sum / all.size());
  o.max = *std::max_element(all.begin(), all.end());
  std::vector<double> s = all;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  o.median = n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
  return o;
}

// Zhang-Suen thinning. Each sub-iteration marks pixels from a snapshot and
// deletes them together; a component (8-connected) whose every pixel is
// marked keeps its first pixel in raster order.
inline Bin thin(Bin m) {
  for (auto& v : m.v) v = v ? 1 : 0;
  auto component_of = [&m](int start) {
    std::set<int> seen{start};
    std::deque<int> q{start};
    while (!q.empty()) {
      const int i = q.front();
      q.pop_front();
      const int y = i / m.w, x = i % m.w;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (m.at(y + dy, x + dx) && !seen.count((y + dy) * m.w + x + dx)) {
            seen.insert((y + dy) * m.w + x + dx);
            q.push_back((y + dy) * m.w + x + dx);
          }
        }
    }
    return seen;
  };
  for (bool any = true; any;) {
    any = false;
    for (int step = 1; step <= 2; ++step) {
      std::set<int> marked;
      for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
          if (!m.at(y, x)) continue;
          const int P2 = m.at(y - 1, x), P3 = m.at(y - 1, x + 1), P4 = m.at(y, x + 1), P5 = m.at(y + 1, x + 1);
          const int P6 = m.at(y + 1, x), P7 = m.at(y + 1, x - 1), P8 = m.at(y, x - 1), P9 = m.at(y - 1, x - 1);
          const int seq[9] = {P2, P3, P4, P5, P6, P7, P8, P9, P2};
          int A = 0;
          for (int k = 0; k < 8; ++k) A += (!seq[k] && seq[k + 1]);
          const int B = P2 + P3 + P4 + P5 + P6 + P7 + P8 + P9;
          if (B < 2 || B > 6 || A != 1) continue;
          const bool c = step == 1 ? (!(P2 && P4 && P6) && !(P4 && P6 && P8))
                                   : (!(P2 && P4 && P8) && !(P2 && P6 && P8));
          if (c) marked.insert(y * m.w + x);
        }
      std::set<int> spared;
      std::set<int> visited;
      for (int i : marked) {
        if (visited.count(i)) continue;
        const auto comp = component_of(i);
        visited.insert(comp.begin(), comp.end());
        if (std::all_of(comp.begin(), comp.end(), [&](int j) { return marked.count(j) > 0; })) {
          spared.insert(*comp.begin());  // std::set is ordered, so this is the raster-first pixel
        }
      }
      for (int i : marked) {
        if (spared.count(i)) continue;
        m.v[i] = 0;
        any = true;
      }
    }
  }
  return m;
}

}  // namespace gmseg::oracle
