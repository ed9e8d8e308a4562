#pragma once

#include <memory>
#include <span>
#include <vector>

#include "memtier.hpp"
#include "model.hpp"
#include "sparse.hpp"
#include "timestepper.hpp"

namespace tierfem {

struct EngineOptions {
  StrategyKind strategy = StrategyKind::SlowOnly;
  std::size_t partitionElements = 0;  // 0: ceil(nElements / 8)
  std::size_t fastCapacityBytes = std::size_t(16) << 30;
  ChannelConfig channel;
  PipelineOptions pipeline;
  /// Colored scatter instead of atomics in the EBE products.
  bool deterministic = true;
  CgOptions cg;
  TwoLevelOptions twoLevel;
  double dt = 0.005;
  double rayleighFmin = 0.2, rayleighFmax = 2.5;
};

using ElementForces = std::array<double, 30>;

/// Constitutive update of one element: strain increments from du at the four
/// evaluation points, spring updates, new tangents, the element's internal-force
/// increment sum_j w_j B_j^T dsigma_j and its damping level.
void multispringElement(const Model& model, std::size_t e, ElementMaterialState& st, std::span<const double> du,
                        ElementTangents& D, ElementForces& dq, double& h);

/// q re-derived from the current constitutive states and displacement.
std::vector<double> internalForceFromStates(const Model& model, std::span<const ElementMaterialState> states,
                                            std::span<const double> u);

/// Volume-weighted mean damping over nonlinear elements.
double meanDamping(const Model& model, std::span<const double> h);

/// Runs time steps for one or two analysis sets under one execution strategy.
/// Two sets are only allowed with PIPELINED_BATCH2_EBE.
class Engine {
 public:
  Engine(const Model& model, EngineOptions opt, int nSets = 1);
  ~Engine();

  int sets() const { return static_cast<int>(sets_.size()); }
  const EngineOptions& options() const { return opt_; }
  const Model& model() const { return model_; }

  /// One Newmark step for every set; fExt[s] is the external force at the new time.
  StepTelemetry step(std::span<TimeState* const> states, std::span<const std::span<const double>> fExt);

  const std::vector<ElementTangents>& tangents(int set) const;
  RayleighCoeffs rayleigh(int set) const;
  double hbar(int set) const;
  const PartitionStore& store(int set) const;
  const SolveStats& lastSolve(int set) const;
  const FastArena& arena() const { return *arena_; }
  const TransferChannel& channel() const { return *channel_; }
  /// Bytes the fast arena would hold for this strategy (without the slots).
  std::size_t residentDataBytes() const;

 private:
  struct Set;
  void setupArena();
  void solve(std::span<TimeState* const> states, StepTelemetry& tel);
  void constitutive(StepTelemetry& tel);
  void kernelRange(Set& s, std::size_t begin, std::span<ElementMaterialState> states);

  const Model& model_;
  EngineOptions opt_;
  NewmarkCoeffs nm_;
  std::vector<std::unique_ptr<Set>> sets_;
  std::unique_ptr<FastArena> arena_;
  std::unique_ptr<TransferChannel> channel_;
  std::unique_ptr<EbeOperator> ebe_;
  std::unique_ptr<PartitionPipeline> pipeline_;
  std::size_t partitionElements_ = 0;
};

}  // namespace tierfem
