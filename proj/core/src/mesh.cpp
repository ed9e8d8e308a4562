#include "tierfem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tierfem/byteio.hpp"
#include "tierfem/errors.hpp"

namespace tierfem {

// ---------------------------------------------------------------- materials

double MaterialParams::vs() const { return std::sqrt(G0 / rho); }
double MaterialParams::vp() const { return std::sqrt((Kb + 4.0 * G0 / 3.0) / rho); }

double MaterialParams::tauLimit() const {
  if (linear || betaRo != 1.0) return std::numeric_limits<double>::infinity();
  return G0 * gammaRef / alphaRo;
}

void MaterialParams::validate() const {
  if (!(rho > 0)) throw InputError("material: density must be positive");
  if (!(G0 > 0)) throw InputError("material: G0 must be positive");
  if (!(Kb > 2.0 * G0 / 3.0)) throw InputError("material: bulk modulus must exceed 2*G0/3");
  if (!(hmax >= 0 && hmax < 2.0 / M_PI)) throw InputError("material: hmax must lie in [0, 2/pi)");
  if (!linear) {
    if (!(gammaRef > 0)) throw InputError("material: reference strain must be positive");
    if (!(betaRo > 0 && betaRo <= 1.0)) throw InputError("material: skeleton exponent must lie in (0, 1]");
    if (!(alphaRo > 0)) throw InputError("material: skeleton coefficient must be positive");
  }
}

MaterialParams MaterialParams::fromVs(double vs, double rho, double poisson, bool linear) {
  MaterialParams m;
  m.rho = rho;
  m.G0 = rho * vs * vs;
  m.Kb = m.G0 * 2.0 * (1.0 + poisson) / (3.0 * (1.0 - 2.0 * poisson));
  m.linear = linear;
  if (linear) m.hmax = 0.0;
  return m;
}

MaterialTable defaultMaterials() {
  MaterialParams soft = MaterialParams::fromVs(100.0, 1700.0, 0.45, false);
  soft.gammaRef = 1.0e-3;
  soft.hmax = 0.2;
  MaterialParams rock = MaterialParams::fromVs(400.0, 2000.0, 0.35, true);
  return {soft, rock};
}

// ---------------------------------------------------------------- interfaces

double InterfaceSpec::z(double x, double y) const {
  switch (kind) {
    case Kind::Flat:
      return z0;
    case Kind::Sloped: {
      const double xc = std::clamp(x, x0, x1);
      return z0 + slopeX * (xc - x0) + slopeY * y;
    }
    case Kind::Basin: {
      const double r = std::hypot(x - cx, y - cy);
      if (r >= radius) return z0;
      return z0 - depth * 0.5 * (1.0 + std::cos(M_PI * r / radius));
    }
  }
  return z0;
}

InterfaceSpec InterfaceSpec::flat(double z0) {
  InterfaceSpec s;
  s.kind = Kind::Flat;
  s.z0 = z0;
  return s;
}

InterfaceSpec InterfaceSpec::sloped(double z0, double slopeX, double slopeY) {
  InterfaceSpec s;
  s.kind = Kind::Sloped;
  s.z0 = z0;
  s.slopeX = slopeX;
  s.slopeY = slopeY;
  return s;
}

int MeshConfig::layerAt(double x, double y, double z) const {
  int layer = 0;
  for (const auto& itf : interfaces)
    if (itf.z(x, y) > z) ++layer;
  return layer;
}

int MeshConfig::materialOfLayer(int layer) const {
  if (materialPerLayer.empty()) return layer;
  return materialPerLayer.at(static_cast<std::size_t>(layer));
}

namespace {

const char* kindName(InterfaceSpec::Kind k) {
  switch (k) {
    case InterfaceSpec::Kind::Flat: return "flat";
    case InterfaceSpec::Kind::Sloped: return "sloped";
    case InterfaceSpec::Kind::Basin: return "basin";
  }
  return "flat";
}

}  // namespace

void to_json(nlohmann::json& j, const InterfaceSpec& s) {
  j = nlohmann::json{{"kind", kindName(s.kind)}, {"z0", s.z0}};
  if (s.kind == InterfaceSpec::Kind::Sloped) {
    j["slopeX"] = s.slopeX;
    j["slopeY"] = s.slopeY;
    j["x0"] = s.x0;
    if (s.x1 < 1e299) j["x1"] = s.x1;
  } else if (s.kind == InterfaceSpec::Kind::Basin) {
    j["cx"] = s.cx;
    j["cy"] = s.cy;
    j["radius"] = s.radius;
    j["depth"] = s.depth;
  }
}

void from_json(const nlohmann::json& j, InterfaceSpec& s) {
  const std::string kind = j.value("kind", "flat");
  if (kind == "flat") s.kind = InterfaceSpec::Kind::Flat;
  else if (kind == "sloped") s.kind = InterfaceSpec::Kind::Sloped;
  else if (kind == "basin") s.kind = InterfaceSpec::Kind::Basin;
  else throw InputError("unknown interface kind '" + kind + "'");
  s.z0 = j.at("z0").get<double>();
  s.slopeX = j.value("slopeX", 0.0);
  s.slopeY = j.value("slopeY", 0.0);
  s.x0 = j.value("x0", 0.0);
  s.x1 = j.value("x1", 1e300);
  s.cx = j.value("cx", 0.0);
  s.cy = j.value("cy", 0.0);
  s.radius = j.value("radius", 1.0);
  s.depth = j.value("depth", 0.0);
}

void to_json(nlohmann::json& j, const MeshConfig& c) {
  j = nlohmann::json{{"Lx", c.Lx}, {"Ly", c.Ly}, {"Lz", c.Lz}, {"nx", c.nx}, {"ny", c.ny},
                     {"nz", c.nz}, {"interfaces", c.interfaces}, {"materialPerLayer", c.materialPerLayer}};
}

void from_json(const nlohmann::json& j, MeshConfig& c) {
  c.Lx = j.at("Lx").get<double>();
  c.Ly = j.at("Ly").get<double>();
  c.Lz = j.at("Lz").get<double>();
  c.nx = j.at("nx").get<int>();
  c.ny = j.at("ny").get<int>();
  c.nz = j.at("nz").get<int>();
  c.interfaces = j.value("interfaces", std::vector<InterfaceSpec>{});
  c.materialPerLayer = j.value("materialPerLayer", std::vector<int>{});
}

void to_json(nlohmann::json& j, const MaterialParams& m) {
  j = nlohmann::json{{"rho", m.rho},         {"G0", m.G0},           {"Kb", m.Kb},
                     {"gammaRef", m.gammaRef}, {"betaRo", m.betaRo}, {"alphaRo", m.alphaRo},
                     {"hmax", m.hmax},       {"linear", m.linear}};
}

void from_json(const nlohmann::json& j, MaterialParams& m) {
  if (j.contains("vs")) {
    m = MaterialParams::fromVs(j.at("vs").get<double>(), j.at("rho").get<double>(),
                               j.value("poisson", 0.45), j.value("linear", false));
  } else {
    m.rho = j.at("rho").get<double>();
    m.G0 = j.at("G0").get<double>();
    m.Kb = j.at("Kb").get<double>();
    m.linear = j.value("linear", false);
  }
  m.gammaRef = j.value("gammaRef", m.gammaRef);
  m.betaRo = j.value("betaRo", m.betaRo);
  m.alphaRo = j.value("alphaRo", m.alphaRo);
  m.hmax = j.value("hmax", m.linear ? 0.0 : m.hmax);
  m.validate();
}

// ---------------------------------------------------------------- mesh

std::int32_t Mesh::nodeAt(int i, int j, int k) const {
  const int NX = 2 * nx + 1, NY = 2 * ny + 1;
  if (i < 0 || j < 0 || k < 0 || i > 2 * nx || j > 2 * ny || k > 2 * nz) return -1;
  return latticeToNode[static_cast<std::size_t>((k * NY + j) * NX + i)];
}

double Mesh::volume(std::size_t e) const {
  const auto& t = tets[e];
  const Vec3& a = nodes[t[0]];
  Vec3 b{}, c{}, d{};
  for (int q = 0; q < 3; ++q) {
    b[q] = nodes[t[1]][q] - a[q];
    c[q] = nodes[t[2]][q] - a[q];
    d[q] = nodes[t[3]][q] - a[q];
  }
  const double det = b[0] * (c[1] * d[2] - c[2] * d[1]) - b[1] * (c[0] * d[2] - c[2] * d[0]) +
                     b[2] * (c[0] * d[1] - c[1] * d[0]);
  return det / 6.0;
}

Vec3 Mesh::centroid(std::size_t e) const {
  Vec3 c{0, 0, 0};
  for (int v = 0; v < 4; ++v)
    for (int q = 0; q < 3; ++q) c[q] += 0.25 * nodes[tets[e][v]][q];
  return c;
}

double Mesh::maxCornerEdge(std::size_t e) const {
  double h = 0;
  for (const auto& ed : kTetEdges) {
    const Vec3& a = nodes[tets[e][ed[0]]];
    const Vec3& b = nodes[tets[e][ed[1]]];
    h = std::max(h, std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]));
  }
  return h;
}

std::vector<std::uint32_t> Mesh::surfaceNodes() const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t n = 0; n < nodes.size(); ++n)
    if (boundary[n] & kSurface) out.push_back(n);
  return out;
}

std::uint32_t Mesh::nearestSurfaceNode(double x, double y) const {
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t arg = 0;
  for (std::uint32_t n = 0; n < nodes.size(); ++n) {
    if (!(boundary[n] & kSurface)) continue;
    const double d = std::hypot(nodes[n][0] - x, nodes[n][1] - y);
    if (d < best) {
      best = d;
      arg = n;
    }
  }
  if (!std::isfinite(best)) throw InputError("mesh has no surface nodes");
  return arg;
}

void Mesh::validate() const {
  if (materialOf.size() != tets.size() || boundary.size() != nodes.size())
    throw InputError("mesh arrays have inconsistent lengths");
  for (std::size_t e = 0; e < tets.size(); ++e) {
    for (auto n : tets[e])
      if (n >= nodes.size()) throw InputError("connectivity references a missing node");
    if (!(volume(e) > 0)) throw InputError("element " + std::to_string(e) + " has non-positive volume");
    for (std::size_t m = 0; m < kTetEdges.size(); ++m) {
      const Vec3& a = nodes[tets[e][kTetEdges[m][0]]];
      const Vec3& b = nodes[tets[e][kTetEdges[m][1]]];
      const Vec3& c = nodes[tets[e][4 + m]];
      for (int q = 0; q < 3; ++q)
        if (std::abs(c[q] - 0.5 * (a[q] + b[q])) > 1e-12 * std::max(1.0, std::abs(c[q])))
          throw InputError("midside node off its edge midpoint in element " + std::to_string(e));
    }
  }
}

namespace {

// Kuhn split: every monotone lattice path from (0,0,0) to (1,1,1).
constexpr std::array<std::array<int, 3>, 6> kAxisOrders = {
    {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};

void checkConfig(const MeshConfig& cfg) {
  if (cfg.nx < 1 || cfg.ny < 1 || cfg.nz < 1) throw InputError("mesh: cell counts must be >= 1");
  if (!(cfg.Lx > 0 && cfg.Ly > 0 && cfg.Lz > 0)) throw InputError("mesh: degenerate box extent");
  if (!cfg.materialPerLayer.empty() &&
      cfg.materialPerLayer.size() != static_cast<std::size_t>(cfg.layerCount()))
    throw InputError("mesh: materialPerLayer must have interfaces+1 entries");
  // Interfaces must be strictly ordered on a sampling finer than the lattice.
  const int sx = 4 * cfg.nx, sy = 4 * cfg.ny;
  for (int i = 0; i <= sx; ++i)
    for (int j = 0; j <= sy; ++j) {
      const double x = cfg.Lx * i / sx, y = cfg.Ly * j / sy;
      for (std::size_t q = 1; q < cfg.interfaces.size(); ++q)
        if (!(cfg.interfaces[q - 1].z(x, y) > cfg.interfaces[q].z(x, y)))
          throw InputError("mesh: interfaces " + std::to_string(q - 1) + " and " + std::to_string(q) +
                           " intersect near x=" + std::to_string(x) + ", y=" + std::to_string(y));
    }
}

}  // namespace

Mesh generateLayeredBoxMesh(const MeshConfig& cfg, const MaterialTable& materials, double fmax) {
  checkConfig(cfg);
  Mesh mesh;
  mesh.nx = cfg.nx;
  mesh.ny = cfg.ny;
  mesh.nz = cfg.nz;
  mesh.Lx = cfg.Lx;
  mesh.Ly = cfg.Ly;
  mesh.Lz = cfg.Lz;
  const int NX = 2 * cfg.nx + 1, NY = 2 * cfg.ny + 1, NZ = 2 * cfg.nz + 1;
  const auto lat = [&](int i, int j, int k) { return static_cast<std::size_t>((k * NY + j) * NX + i); };

  std::vector<std::array<std::array<int, 3>, 4>> cornerLattice;  // per tet, lattice coords of corners
  cornerLattice.reserve(static_cast<std::size_t>(6 * cfg.nx * cfg.ny * cfg.nz));
  std::vector<char> used(static_cast<std::size_t>(NX * NY * NZ), 0);

  for (int k = 0; k < cfg.nz; ++k)
    for (int j = 0; j < cfg.ny; ++j)
      for (int i = 0; i < cfg.nx; ++i)
        for (const auto& order : kAxisOrders) {
          std::array<std::array<int, 3>, 4> c{};
          std::array<int, 3> p{0, 0, 0};
          c[0] = {2 * i, 2 * j, 2 * k};
          for (int s = 0; s < 3; ++s) {
            p[order[s]] = 2;
            c[s + 1] = {2 * i + p[0], 2 * j + p[1], 2 * k + p[2]};
          }
          cornerLattice.push_back(c);
        }

  // Mark lattice points used by corners and edge midpoints.
  for (const auto& c : cornerLattice) {
    for (const auto& v : c) used[lat(v[0], v[1], v[2])] = 1;
    for (const auto& ed : kTetEdges) {
      const auto& a = c[ed[0]];
      const auto& b = c[ed[1]];
      used[lat((a[0] + b[0]) / 2, (a[1] + b[1]) / 2, (a[2] + b[2]) / 2)] = 1;
    }
  }

  mesh.latticeToNode.assign(used.size(), -1);
  const double hx = cfg.Lx / (NX - 1), hy = cfg.Ly / (NY - 1), hz = cfg.Lz / (NZ - 1);
  for (int k = 0; k < NZ; ++k)
    for (int j = 0; j < NY; ++j)
      for (int i = 0; i < NX; ++i) {
        if (!used[lat(i, j, k)]) continue;
        mesh.latticeToNode[lat(i, j, k)] = static_cast<std::int32_t>(mesh.nodes.size());
        // Exact endpoints so boundary classification is robust.
        const double x = (i == NX - 1) ? cfg.Lx : i * hx;
        const double y = (j == NY - 1) ? cfg.Ly : j * hy;
        const double z = (k == NZ - 1) ? 0.0 : -cfg.Lz + k * hz;
        mesh.nodes.push_back({x, y, z});
        std::uint8_t flag = kInterior;
        if (k == NZ - 1) flag |= kSurface;
        if (k == 0) flag |= kBottom;
        if (i == 0 || j == 0 || i == NX - 1 || j == NY - 1) flag |= kSide;
        mesh.boundary.push_back(flag);
      }

  for (auto c : cornerLattice) {
    Tet10 t{};
    for (int v = 0; v < 4; ++v) t[v] = static_cast<std::uint32_t>(mesh.latticeToNode[lat(c[v][0], c[v][1], c[v][2])]);
    mesh.tets.push_back(t);
    if (mesh.volume(mesh.tets.size() - 1) < 0) {
      std::swap(c[2], c[3]);
      std::swap(mesh.tets.back()[2], mesh.tets.back()[3]);
    }
    for (std::size_t m = 0; m < kTetEdges.size(); ++m) {
      const auto& a = c[kTetEdges[m][0]];
      const auto& b = c[kTetEdges[m][1]];
      mesh.tets.back()[4 + m] =
          static_cast<std::uint32_t>(mesh.latticeToNode[lat((a[0] + b[0]) / 2, (a[1] + b[1]) / 2, (a[2] + b[2]) / 2)]);
    }
    const Vec3 cen = mesh.centroid(mesh.tets.size() - 1);
    const int mat = cfg.materialOfLayer(cfg.layerAt(cen[0], cen[1], cen[2]));
    if (mat < 0 || static_cast<std::size_t>(mat) >= materials.size())
      throw InputError("mesh: layer material id " + std::to_string(mat) + " is not in the material table");
    mesh.materialOf.push_back(static_cast<std::uint32_t>(mat));
  }

  if (fmax > 0) {
    double vsMin = std::numeric_limits<double>::infinity(), hMax = 0;
    for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
      vsMin = std::min(vsMin, materials[mesh.materialOf[e]].vs());
      hMax = std::max(hMax, mesh.maxCornerEdge(e));
    }
    mesh.elementsPerWavelength = vsMin / (fmax * hMax);
  }
  mesh.validate();
  return mesh;
}

DofMap buildDofMap(const Mesh& mesh, const BoundaryConditionSpec& bc) {
  DofMap map;
  map.nodeDofs.resize(mesh.nodeCount());
  map.kind.assign(3 * mesh.nodeCount(), DofConstraint::Free);
  for (std::uint32_t n = 0; n < mesh.nodeCount(); ++n) {
    const bool absorbing = ((mesh.boundary[n] & kBottom) && bc.absorbingBottom) ||
                           ((mesh.boundary[n] & kSide) && bc.absorbingSides);
    for (std::uint32_t c = 0; c < 3; ++c) {
      map.nodeDofs[n][c] = 3 * n + c;
      if (absorbing) map.kind[3 * n + c] = DofConstraint::AbsorbingDashpot;
    }
  }
  return map;
}

Column1D extractColumnMesh(const MeshConfig& cfg, double x, double y) {
  checkConfig(cfg);
  if (x < 0 || x > cfg.Lx || y < 0 || y > cfg.Ly)
    throw InputError("column query (" + std::to_string(x) + ", " + std::to_string(y) + ") is outside the box");
  Column1D col;
  col.x = x;
  col.y = y;
  col.depth = cfg.Lz;
  double top = 0.0;
  for (int layer = 0; layer < cfg.layerCount(); ++layer) {
    double bottom = (layer < static_cast<int>(cfg.interfaces.size())) ? cfg.interfaces[layer].z(x, y) : -cfg.Lz;
    bottom = std::clamp(bottom, -cfg.Lz, 0.0);
    bottom = std::min(bottom, top);
    if (top - bottom > 0) col.layers.push_back({top - bottom, cfg.materialOfLayer(layer)});
    top = bottom;
  }
  const double hz = cfg.Lz / cfg.nz;
  for (int c = 0; c < cfg.nz; ++c) {
    const double zt = -c * hz;
    col.cellTop.push_back(zt);
    col.cellMaterial.push_back(cfg.materialOfLayer(cfg.layerAt(x, y, zt - 0.5 * hz)));
  }
  return col;
}

Column1D extractColumnMesh(const Mesh& mesh, const MeshConfig& cfg, double x, double y) {
  if (x < 0 || x > mesh.Lx || y < 0 || y > mesh.Ly)
    throw InputError("column query is outside the mesh");
  return extractColumnMesh(cfg, x, y);
}

// ---------------------------------------------------------------- serialization

namespace {
constexpr std::uint32_t kMeshVersion = 1;
}

std::vector<std::uint8_t> serializeMesh(const Mesh& mesh) {
  std::vector<std::uint8_t> out;
  byteio::Writer w(out);
  w.bytes("TFM1");
  w.put<std::uint32_t>(kMeshVersion);
  w.put<std::uint64_t>(mesh.nodes.size());
  w.put<std::uint64_t>(mesh.tets.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(mesh.nx));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(mesh.ny));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(mesh.nz));
  w.put<double>(mesh.Lx);
  w.put<double>(mesh.Ly);
  w.put<double>(mesh.Lz);
  for (const auto& p : mesh.nodes)
    for (double c : p) w.put<double>(c);
  for (const auto& t : mesh.tets)
    for (auto n : t) w.put<std::uint32_t>(n);
  for (auto m : mesh.materialOf) w.put<std::uint32_t>(m);
  for (auto b : mesh.boundary) w.put<std::uint8_t>(b);
  return out;
}

Mesh deserializeMesh(const std::vector<std::uint8_t>& bytes) {
  byteio::Reader r(bytes);
  if (r.str(4) != "TFM1") throw InputError("not a TFM1 mesh file");
  if (r.get<std::uint32_t>() != kMeshVersion) throw InputError("unsupported mesh version");
  Mesh mesh;
  const auto nn = r.get<std::uint64_t>();
  const auto ne = r.get<std::uint64_t>();
  mesh.nx = static_cast<int>(r.get<std::uint32_t>());
  mesh.ny = static_cast<int>(r.get<std::uint32_t>());
  mesh.nz = static_cast<int>(r.get<std::uint32_t>());
  mesh.Lx = r.get<double>();
  mesh.Ly = r.get<double>();
  mesh.Lz = r.get<double>();
  if (r.remaining() != nn * 25 + ne * 44) throw InputError("mesh file size does not match its header");
  mesh.nodes.resize(nn);
  for (auto& p : mesh.nodes)
    for (double& c : p) c = r.get<double>();
  mesh.tets.resize(ne);
  for (auto& t : mesh.tets)
    for (auto& n : t) n = r.get<std::uint32_t>();
  mesh.materialOf.resize(ne);
  for (auto& m : mesh.materialOf) m = r.get<std::uint32_t>();
  mesh.boundary.resize(nn);
  for (auto& b : mesh.boundary) b = r.get<std::uint8_t>();

  // Rebuild the lattice lookup from coordinates.
  const int NX = 2 * mesh.nx + 1, NY = 2 * mesh.ny + 1, NZ = 2 * mesh.nz + 1;
  mesh.latticeToNode.assign(static_cast<std::size_t>(NX * NY * NZ), -1);
  for (std::uint32_t n = 0; n < nn; ++n) {
    const int i = static_cast<int>(std::lround(mesh.nodes[n][0] / mesh.Lx * (NX - 1)));
    const int j = static_cast<int>(std::lround(mesh.nodes[n][1] / mesh.Ly * (NY - 1)));
    const int k = static_cast<int>(std::lround((mesh.nodes[n][2] + mesh.Lz) / mesh.Lz * (NZ - 1)));
    if (i < 0 || j < 0 || k < 0 || i >= NX || j >= NY || k >= NZ) throw InputError("mesh node off its lattice");
    mesh.latticeToNode[static_cast<std::size_t>((k * NY + j) * NX + i)] = static_cast<std::int32_t>(n);
  }
  mesh.validate();
  return mesh;
}

void writeMesh(const Mesh& mesh, const std::filesystem::path& path) {
  byteio::writeFileAtomic(path.string(), serializeMesh(mesh));
}

Mesh readMesh(const std::filesystem::path& path) { return deserializeMesh(byteio::readFile(path.string())); }

}  // namespace tierfem
