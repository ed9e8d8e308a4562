#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace tierfem {

using Vec3 = std::array<double, 3>;

/// Soil or rock parameters of one material id.
struct MaterialParams {
  double rho = 1700.0;        // kg/m^3
  double G0 = 1.7e7;          // Pa
  double Kb = 3.0e7;          // Pa
  double gammaRef = 1.0e-3;   // reference strain
  double betaRo = 1.0;        // skeleton exponent
  double alphaRo = 1.0;       // skeleton coefficient
  double hmax = 0.2;          // maximum damping ratio
  bool linear = false;

  double vs() const;
  double vp() const;
  /// Bound of |tau| on the skeleton; finite only for betaRo == 1.
  double tauLimit() const;
  void validate() const;

  static MaterialParams fromVs(double vs, double rho, double poisson, bool linear);
};

using MaterialTable = std::vector<MaterialParams>;

/// Soft layer Vs = 100 m/s over linear bedrock Vs = 400 m/s.
MaterialTable defaultMaterials();

/// Analytic depth surface z(x, y) separating two layers (z <= 0 is below the surface).
struct InterfaceSpec {
  enum class Kind { Flat, Sloped, Basin };
  Kind kind = Kind::Flat;
  double z0 = -10.0;
  double slopeX = 0.0;   // Sloped: dz/dx
  double slopeY = 0.0;   // Sloped: dz/dy
  double x0 = 0.0;       // Sloped: slope applies for x >= x0 ... x1 (clamped ramp)
  double x1 = 1e300;
  double cx = 0.0, cy = 0.0, radius = 1.0, depth = 0.0;  // Basin: cosine bowl

  double z(double x, double y) const;

  static InterfaceSpec flat(double z0);
  static InterfaceSpec sloped(double z0, double slopeX, double slopeY = 0.0);
};

struct MeshConfig {
  double Lx = 1.0, Ly = 1.0, Lz = 1.0;
  int nx = 1, ny = 1, nz = 1;
  /// Ordered top to bottom; layer i lies between interface i-1 and i.
  std::vector<InterfaceSpec> interfaces;
  /// One material id per layer (interfaces.size() + 1 entries, or empty for 0,1,2,...).
  std::vector<int> materialPerLayer;

  int layerCount() const { return static_cast<int>(interfaces.size()) + 1; }
  int layerAt(double x, double y, double z) const;
  int materialOfLayer(int layer) const;
};

void to_json(nlohmann::json& j, const InterfaceSpec& s);
void from_json(const nlohmann::json& j, InterfaceSpec& s);
void to_json(nlohmann::json& j, const MeshConfig& c);
void from_json(const nlohmann::json& j, MeshConfig& c);
void to_json(nlohmann::json& j, const MaterialParams& m);
void from_json(const nlohmann::json& j, MaterialParams& m);

enum BoundaryFlag : std::uint8_t {
  kInterior = 0,
  kSurface = 1,
  kBottom = 2,
  kSide = 4,
};

/// 10-node tetrahedron: corners 0-3, then midside nodes on edges
/// (0,1) (1,2) (0,2) (0,3) (1,3) (2,3).
using Tet10 = std::array<std::uint32_t, 10>;

inline constexpr std::array<std::array<int, 2>, 6> kTetEdges = {
    {{0, 1}, {1, 2}, {0, 2}, {0, 3}, {1, 3}, {2, 3}}};

struct Mesh {
  std::vector<Vec3> nodes;
  std::vector<Tet10> tets;
  std::vector<std::uint32_t> materialOf;
  /// Bitmask of BoundaryFlag per node; side nodes on the surface carry both flags.
  std::vector<std::uint8_t> boundary;

  // Structured-grid metadata (quadratic lattice of (2nx+1)(2ny+1)(2nz+1) points).
  int nx = 0, ny = 0, nz = 0;
  double Lx = 0, Ly = 0, Lz = 0;
  double elementsPerWavelength = 0;  // filled by generateLayeredBoxMesh when fmax > 0

  std::size_t nodeCount() const { return nodes.size(); }
  std::size_t elementCount() const { return tets.size(); }

  /// Lattice index of node (i, j, k) on the quadratic grid, or -1 if unused.
  std::vector<std::int32_t> latticeToNode;
  std::int32_t nodeAt(int i, int j, int k) const;

  double volume(std::size_t e) const;
  Vec3 centroid(std::size_t e) const;
  double maxCornerEdge(std::size_t e) const;

  /// Nearest node carrying the surface flag.
  std::uint32_t nearestSurfaceNode(double x, double y) const;
  std::vector<std::uint32_t> surfaceNodes() const;

  /// Checks positivity, midside placement and column extremes; throws InputError.
  void validate() const;
};

/// Structured box split into 6 Kuhn tetrahedra per cell, promoted to quadratic.
/// The box spans x in [0,Lx], y in [0,Ly], z in [-Lz,0].
/// fmax > 0 fills mesh.elementsPerWavelength = Vs_min / (fmax * h_max).
Mesh generateLayeredBoxMesh(const MeshConfig& cfg, const MaterialTable& materials,
                            double fmax = 0.0);

struct BoundaryConditionSpec {
  bool absorbingBottom = true;
  bool absorbingSides = true;
};

enum class DofConstraint : std::uint8_t { Free = 0, AbsorbingDashpot = 1 };

struct DofMap {
  std::vector<std::array<std::uint32_t, 3>> nodeDofs;
  /// Per DOF. Absorbing DOFs stay free unknowns; the flag only attaches dashpots.
  std::vector<DofConstraint> kind;
  std::size_t dofCount() const { return kind.size(); }
};

DofMap buildDofMap(const Mesh& mesh, const BoundaryConditionSpec& bc = {});

struct Column1D {
  struct Layer {
    double thickness;
    int material;
  };
  double x = 0, y = 0;
  /// Top to bottom; thicknesses sum to the box depth.
  std::vector<Layer> layers;
  /// Vertical grid of the parent mesh: nz cells of equal height from -Lz to 0,
  /// each carrying the material of the layer at its midpoint.
  std::vector<double> cellTop;  // z of each cell's top face, top cell first
  std::vector<int> cellMaterial;
  double depth = 0;
};

/// Layer stack beneath (x, y); throws InputError outside the box.
Column1D extractColumnMesh(const MeshConfig& cfg, double x, double y);
Column1D extractColumnMesh(const Mesh& mesh, const MeshConfig& cfg, double x, double y);

/// Binary format: "TFM1", u32 version, u64 nNodes, u64 nTets, u32 nx,ny,nz, f64 Lx,Ly,Lz,
/// then f64[3*nNodes] coords, u32[10*nTets] connectivity, u32[nTets] material,
/// u8[nNodes] boundary flags. All little-endian.
std::vector<std::uint8_t> serializeMesh(const Mesh& mesh);
Mesh deserializeMesh(const std::vector<std::uint8_t>& bytes);
void writeMesh(const Mesh& mesh, const std::filesystem::path& path);
Mesh readMesh(const std::filesystem::path& path);

}  // namespace tierfem
