#include "tierfem/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "tierfem/errors.hpp"

namespace tierfem {

std::uint32_t Model::levelOf(std::uint32_t node) const {
  const double h = mesh.Lz / (2.0 * mesh.nz);
  return static_cast<std::uint32_t>(std::lround((mesh.nodes[node][2] + mesh.Lz) / h));
}

std::vector<std::vector<std::uint32_t>> colorElements(const Mesh& mesh) {
  std::vector<std::vector<std::uint32_t>> colors;
  // Per color, the set of nodes already touched.
  std::vector<std::vector<bool>> used;
  for (std::uint32_t e = 0; e < mesh.tets.size(); ++e) {
    const Tet10& t = mesh.tets[e];
    std::size_t c = 0;
    for (; c < colors.size(); ++c) {
      bool clash = false;
      for (auto n : t)
        if (used[c][n]) {
          clash = true;
          break;
        }
      if (!clash) break;
    }
    if (c == colors.size()) {
      colors.emplace_back();
      used.emplace_back(mesh.nodes.size(), false);
    }
    colors[c].push_back(e);
    for (auto n : t) used[c][n] = true;
  }
  return colors;
}

ElementTangents initialTangents(const Model& model, std::size_t e) {
  const MaterialParams& mat = model.material(e);
  ElementTangents D;
  if (mat.linear) {
    D.fill(isotropicElasticD(mat.Kb, mat.G0));
  } else {
    const EvalPointState virgin{};
    D.fill(evalPointTangent(virgin, mat, *model.table));
  }
  return D;
}

Model buildModel(const MeshConfig& cfg, const MaterialTable& materials, SideBoundary side, double fmax) {
  return buildModel(generateLayeredBoxMesh(cfg, materials, fmax), cfg, materials, side);
}

Model buildModel(Mesh mesh, const MeshConfig& cfg, const MaterialTable& materials, SideBoundary side) {
  Model m;
  m.mesh = std::move(mesh);
  m.materials = materials;
  m.meshConfig = cfg;
  m.sideBoundary = side;
  m.table = &defaultDirectionTable();
  for (const auto& mat : m.materials) mat.validate();
  for (auto id : m.mesh.materialOf)
    if (id >= m.materials.size()) throw InputError("element references an undefined material");

  m.dofs = buildDofMap(m.mesh);
  const std::size_t nd = m.dofs.dofCount();
  m.mass.assign(nd, 0.0);
  m.dashpot.assign(nd, 0.0);
  m.bottomDashpot.assign(nd, 0.0);
  m.sideDashpot.assign(nd, 0.0);

  m.kernels.resize(m.nElements());
  for (std::size_t e = 0; e < m.nElements(); ++e) {
    m.kernels[e] = precomputeElement(m.mesh, e);
    const auto me = lumpedMass(m.kernels[e], m.material(e).rho);
    for (int a = 0; a < 10; ++a)
      for (int c = 0; c < 3; ++c) m.mass[3 * m.kernels[e].nodes[a] + c] += me[3 * a + c];
  }

  m.faces = boundaryFaces(m.mesh);
  std::map<std::uint32_t, Vec3> sideArea;
  for (const auto& f : m.faces) {
    if (f.side == FaceSide::Top) continue;
    const auto c = dashpotMatrix(f, m.material(f.element));
    const auto trib = faceTributaryAreas(f.area);
    for (int n = 0; n < 6; ++n) {
      for (int d = 0; d < 3; ++d) {
        const std::size_t dof = 3 * f.nodes[n] + d;
        m.dashpot[dof] += c[n][d];
        (f.side == FaceSide::Bottom ? m.bottomDashpot : m.sideDashpot)[dof] += c[n][d];
      }
      if (f.side != FaceSide::Bottom) {
        Vec3& a = sideArea[f.nodes[n]];
        for (int d = 0; d < 3; ++d) a[d] += trib[n] * f.normal[d];
      }
    }
  }

  if (side == SideBoundary::FreeField) {
    // One 1D column per distinct layer stack along the sides.
    // The 1D solver only sees the cell-wise material stack, so that is the key.
    std::map<std::vector<int>, std::uint32_t> columnKey;
    for (const auto& [node, area] : sideArea) {
      const Vec3& p = m.mesh.nodes[node];
      Column1D col = extractColumnMesh(m.mesh, cfg, p[0], p[1]);
      auto [it, fresh] = columnKey.emplace(col.cellMaterial, static_cast<std::uint32_t>(m.sideColumns.size()));
      if (fresh) m.sideColumns.push_back(std::move(col));
      m.sideNodes.push_back({node, area, it->second, m.levelOf(node)});
    }
  }

  m.colors = colorElements(m.mesh);
  return m;
}

}  // namespace tierfem
