#pragma once

#include <vector>

#include "constitutive.hpp"
#include "element.hpp"
#include "mesh.hpp"

namespace tierfem {

enum class SideBoundary { FreeField, Dashpot };

/// A side-boundary node that receives free-field forcing.
struct SideNode {
  std::uint32_t node;
  Vec3 areaNormal;      // sum of tributary area times outward normal
  std::uint32_t column; // index into Model::sideColumns
  std::uint32_t level;  // vertical lattice level, 0 at the bottom
};

/// Everything about the discretized problem that does not change in time.
struct Model {
  Mesh mesh;
  MaterialTable materials;
  MeshConfig meshConfig;
  DofMap dofs;
  SideBoundary sideBoundary = SideBoundary::FreeField;

  std::vector<ElementKernelData> kernels;
  std::vector<double> mass;           // lumped, per DOF
  std::vector<double> dashpot;        // all boundary dashpots, per DOF
  std::vector<double> bottomDashpot;  // bottom-face part, drives the incident-wave force
  std::vector<double> sideDashpot;    // side-face part, couples to the free field
  std::vector<BoundaryFace> faces;

  /// Element colors: elements of one color share no node.
  std::vector<std::vector<std::uint32_t>> colors;

  std::vector<SideNode> sideNodes;
  std::vector<Column1D> sideColumns;

  const SpringDirectionTable* table = nullptr;

  std::size_t nDofs() const { return mass.size(); }
  std::size_t nNodes() const { return mesh.nodes.size(); }
  std::size_t nElements() const { return mesh.tets.size(); }
  const MaterialParams& material(std::size_t e) const { return materials[mesh.materialOf[e]]; }
  /// Vertical lattice level of a node (0 at z = -Lz).
  std::uint32_t levelOf(std::uint32_t node) const;
};

Model buildModel(const MeshConfig& cfg, const MaterialTable& materials, SideBoundary side = SideBoundary::FreeField,
                 double fmax = 0.0);
Model buildModel(Mesh mesh, const MeshConfig& cfg, const MaterialTable& materials,
                 SideBoundary side = SideBoundary::FreeField);

/// Greedy element coloring in element order; deterministic.
std::vector<std::vector<std::uint32_t>> colorElements(const Mesh& mesh);

/// Tangents of virgin material: spring-synthesized for nonlinear materials,
/// closed-form isotropic for linear ones.
ElementTangents initialTangents(const Model& model, std::size_t e);

}  // namespace tierfem
