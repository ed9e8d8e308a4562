#include "tierfem/engine.hpp"

#include <algorithm>
#include <cmath>

#include "tierfem/errors.hpp"
#include "tierfem/parallel.hpp"

namespace tierfem {

namespace {

std::array<double, 30> gatherLocal(const ElementKernelData& kd, std::span<const double> x) {
  std::array<double, 30> u;
  for (int a = 0; a < 10; ++a)
    for (int c = 0; c < 3; ++c) u[3 * a + c] = x[3 * kd.nodes[a] + c];
  return u;
}

Voigt6 times(const Mat6& D, const Voigt6& e) {
  Voigt6 s{};
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b) s[a] += D[6 * a + b] * e[b];
  return s;
}

// Element vectors added in color order: the sum at every node is formed in a
// fixed sequence regardless of thread count.
void scatterElementForces(const Model& m, std::span<const ElementForces> f, std::span<double> y) {
  std::fill(y.begin(), y.end(), 0.0);
  for (const auto& color : m.colors)
    parallelFor(color.size(), [&](std::size_t k) {
      const auto e = color[k];
      const auto& kd = m.kernels[e];
      for (int a = 0; a < 10; ++a)
        for (int c = 0; c < 3; ++c) y[3 * kd.nodes[a] + c] += f[e][3 * a + c];
    }, 32);
}

constexpr std::size_t kTangentBytes = sizeof(ElementTangents);

}  // namespace

void multispringElement(const Model& model, std::size_t e, ElementMaterialState& st, std::span<const double> du,
                        ElementTangents& D, ElementForces& dq, double& h) {
  const auto& kd = model.kernels[e];
  const MaterialParams& mat = model.material(e);
  const auto ue = gatherLocal(kd, du);
  dq.fill(0.0);
  if (mat.linear) {
    const Mat6 De = isotropicElasticD(mat.Kb, mat.G0);
    D.fill(De);
    for (int j = 0; j < kQuadPoints; ++j) kd.addBtSigma(j, times(De, kd.strain(j, ue)), kd.weight[j], dq);
    h = 0.0;
    return;
  }
  Voigt6 mean{};
  for (int j = 0; j < kEvalPointsPerElement; ++j) {
    const auto up = updateEvalPoint(st.points[j], kd.strain(j, ue), mat, *model.table);
    D[j] = up.D;
    kd.addBtSigma(j, up.stressIncr, kd.weight[j], dq);
    for (int a = 0; a < 6; ++a) mean[a] += 0.25 * up.stressIncr[a];
  }
  kd.addBtSigma(kCenterPoint, mean, kd.weight[kCenterPoint], dq);
  h = elementDamping(st, mat);
}

std::vector<double> internalForceFromStates(const Model& model, std::span<const ElementMaterialState> states,
                                            std::span<const double> u) {
  std::vector<ElementForces> f(model.nElements());
  parallelFor(model.nElements(), [&](std::size_t e) {
    const auto& kd = model.kernels[e];
    const MaterialParams& mat = model.material(e);
    const auto ue = gatherLocal(kd, u);
    f[e].fill(0.0);
    if (mat.linear) {
      const Mat6 De = isotropicElasticD(mat.Kb, mat.G0);
      for (int j = 0; j < kQuadPoints; ++j) kd.addBtSigma(j, times(De, kd.strain(j, ue)), kd.weight[j], f[e]);
      return;
    }
    Voigt6 mean{};
    for (int j = 0; j < kEvalPointsPerElement; ++j) {
      Voigt6 s = springStress(states[e].points[j], *model.table);
      const Voigt6 eps = kd.strain(j, ue);
      const double p = mat.Kb * (eps[0] + eps[1] + eps[2]);
      for (int a = 0; a < 3; ++a) s[a] += p;
      kd.addBtSigma(j, s, kd.weight[j], f[e]);
      for (int a = 0; a < 6; ++a) mean[a] += 0.25 * s[a];
    }
    kd.addBtSigma(kCenterPoint, mean, kd.weight[kCenterPoint], f[e]);
  });
  std::vector<double> q(model.nDofs());
  scatterElementForces(model, f, q);
  return q;
}

double meanDamping(const Model& model, std::span<const double> h) {
  double num = 0, den = 0;
  for (std::size_t e = 0; e < model.nElements(); ++e) {
    if (model.material(e).linear) continue;
    num += model.kernels[e].volume * h[e];
    den += model.kernels[e].volume;
  }
  return den > 0 ? num / den : 0.0;
}

// ---------------------------------------------------------------- engine

struct Engine::Set {
  Set(std::size_t nElements, std::size_t partElems, std::size_t nDofs)
      : store(nElements, partElems), D(nElements), dq(nElements), h(nElements, 0.0), du(nDofs, 0.0),
        duPrev(nDofs, 0.0), rhs(nDofs, 0.0), dqGlobal(nDofs, 0.0) {}
  PartitionStore store;
  std::vector<ElementTangents> D;
  std::vector<ElementForces> dq;
  std::vector<double> h;
  std::vector<double> du, duPrev, rhs, dqGlobal;
  double hbar = 0;
  RayleighCoeffs rayleigh;
  OperatorScales scales;
  BlockCrsMatrix A;
  std::unique_ptr<TwoLevelPrecond> precond;
  SolveStats last;
};

Engine::Engine(const Model& model, EngineOptions opt, int nSets) : model_(model), opt_(std::move(opt)) {
  if (nSets < 1 || nSets > 2) throw InputError("an engine runs one or two problem sets");
  if (nSets == 2 && opt_.strategy != StrategyKind::PipelinedBatch2Ebe)
    throw InputError("two problem sets need the PIPELINED_BATCH2_EBE strategy");
  nm_ = NewmarkCoeffs::make(opt_.dt);
  partitionElements_ = opt_.partitionElements ? opt_.partitionElements : defaultPartitionElements(model.nElements());
  ebe_ = std::make_unique<EbeOperator>(model_, !opt_.deterministic);
  for (int s = 0; s < nSets; ++s) {
    auto set = std::make_unique<Set>(model.nElements(), partitionElements_, model.nDofs());
    for (std::size_t e = 0; e < model.nElements(); ++e) set->D[e] = initialTangents(model, e);
    set->scales = OperatorScales::make(nm_, set->rayleigh);
    if (opt_.strategy != StrategyKind::PipelinedBatch2Ebe) {
      set->A = assembleBlockCrs(model_, set->D, set->scales);
    } else {
      set->precond = std::make_unique<TwoLevelPrecond>(model_, opt_.twoLevel);
    }
    sets_.push_back(std::move(set));
  }
  arena_ = std::make_unique<FastArena>(opt_.fastCapacityBytes);
  channel_ = std::make_unique<TransferChannel>(opt_.channel);
  setupArena();
  if (isPipelined(opt_.strategy)) {
    std::vector<PartitionStore*> stores;
    for (auto& s : sets_) stores.push_back(&s->store);
    pipeline_ = std::make_unique<PartitionPipeline>(stores, *arena_, *channel_, opt_.pipeline);
  }
}

Engine::~Engine() = default;

std::size_t Engine::residentDataBytes() const {
  const std::size_t nd = model_.nDofs(), ne = model_.nElements(), nn = model_.nNodes();
  const std::size_t geometry = ne * (sizeof(ElementKernelData) + sizeof(std::uint32_t));
  std::size_t total = 0;
  switch (opt_.strategy) {
    case StrategyKind::SlowOnly:
      return 0;
    case StrategyKind::SolverFast:
      // Matrix, CG vectors and block-Jacobi inverses; tangents arrive for UpdateCRS.
      return sets_[0]->A.storageBytes() + 6 * nd * 8 + nn * 72 + ne * kTangentBytes + geometry;
    case StrategyKind::Pipelined:
      total = sets_[0]->A.storageBytes() + 6 * nd * 8 + nn * 72 + geometry;
      // Kinematics, tangents and element force increments now live here too.
      total += 6 * nd * 8 + ne * (kTangentBytes + sizeof(ElementForces) + 8);
      return total;
    case StrategyKind::PipelinedBatch2Ebe:
      total = geometry;
      for (const auto& s : sets_) {
        const auto& C = s->precond->coarseMatrix();
        total += 12 * nd * 8 + ne * (kTangentBytes + sizeof(ElementForces) + 8) + C.nnzBlocks() * 36 +
                 C.rowPtr.size() * 4 + C.colIdx.size() * 4 + nn * 36;
      }
      return total;
  }
  return 0;
}

void Engine::setupArena() {
  if (opt_.strategy == StrategyKind::SlowOnly) return;
  arena_->allocate("solver-data", residentDataBytes());
}

const std::vector<ElementTangents>& Engine::tangents(int set) const { return sets_.at(set)->D; }
RayleighCoeffs Engine::rayleigh(int set) const { return sets_.at(set)->rayleigh; }
double Engine::hbar(int set) const { return sets_.at(set)->hbar; }
const PartitionStore& Engine::store(int set) const { return sets_.at(set)->store; }
const SolveStats& Engine::lastSolve(int set) const { return sets_.at(set)->last; }

void Engine::solve(std::span<TimeState* const> states, StepTelemetry& tel) {
  const double t0 = nowSeconds();
  for (std::size_t s = 0; s < sets_.size(); ++s) {
    Set& S = *sets_[s];
    S.du = S.duPrev;  // warm start
  }
  if (opt_.strategy != StrategyKind::PipelinedBatch2Ebe) {
    Set& S = *sets_[0];
    const auto P = BlockJacobi::fromMatrix(S.A, false);
    S.last = crsPcg(S.A, P, S.rhs, S.du, opt_.cg);
    tel.solverIterations = {S.last.iterations};
  } else {
    CgOptions cg = opt_.cg;
    cg.flexible = true;
    for (auto& S : sets_) S->precond->refresh(*ebe_, S->D, S->scales);
    LinearOp M0 = [&](std::span<const double> r, std::span<double> z) { sets_[0]->precond->apply(r, z); };
    if (sets_.size() == 1) {
      Set& S = *sets_[0];
      S.last = ebeIpcg(*ebe_, S.D, S.scales, M0, S.rhs, S.du, cg);
      tel.solverIterations = {S.last.iterations};
    } else {
      LinearOp M1 = [&](std::span<const double> r, std::span<double> z) { sets_[1]->precond->apply(r, z); };
      Set& A = *sets_[0];
      Set& B = *sets_[1];
      const auto st = ebeIpcgBatched(*ebe_, A.D, B.D, A.scales, B.scales, M0, M1, A.rhs, B.rhs, A.du, B.du, cg);
      A.last = st[0];
      B.last = st[1];
      tel.solverIterations = {st[0].iterations, st[1].iterations};
    }
  }
  for (auto& S : sets_) S->duPrev = S->du;
  (void)states;
  tel.solverSeconds = nowSeconds() - t0;
}

void Engine::kernelRange(Set& s, std::size_t begin, std::span<ElementMaterialState> states) {
  parallelFor(states.size(), [&](std::size_t k) {
    const std::size_t e = begin + k;
    multispringElement(model_, e, states[k], s.du, s.D[e], s.dq[e], s.h[e]);
  }, 8);
}

void Engine::constitutive(StepTelemetry& tel) {
  const std::size_t nd = model_.nDofs();
  switch (opt_.strategy) {
    case StrategyKind::SlowOnly: {
      const double t0 = nowSeconds();
      Set& S = *sets_[0];
      for (std::size_t j = 0; j < S.store.partitions(); ++j) kernelRange(S, S.store.begin(j), S.store.states(j));
      tel.computeSeconds = tel.multispringWallSeconds = nowSeconds() - t0;
      break;
    }
    case StrategyKind::SolverFast: {
      // du goes down, the slow tier updates the springs, tangents come back up.
      Set& S = *sets_[0];
      const double wall0 = nowSeconds();
      const auto down = channel_->charge(Direction::Down, nd * sizeof(double), nowSeconds());
      const double t0 = nowSeconds();
      for (std::size_t j = 0; j < S.store.partitions(); ++j) kernelRange(S, S.store.begin(j), S.store.states(j));
      const double c = nowSeconds() - t0;
      const auto up = channel_->charge(Direction::Up, model_.nElements() * kTangentBytes, nowSeconds());
      tel.computeSeconds = c;
      tel.transferDownSeconds = down.seconds;
      tel.transferUpSeconds = up.seconds;
      tel.transferSeconds = down.seconds + up.seconds;
      tel.bytesDown = down.bytes;
      tel.bytesUp = up.bytes;
      tel.multispringWallSeconds = opt_.channel.realtime ? nowSeconds() - wall0 : c + down.seconds + up.seconds;
      break;
    }
    case StrategyKind::Pipelined:
    case StrategyKind::PipelinedBatch2Ebe: {
      const auto t = pipeline_->run([&](const PipelineItem& it, std::span<ElementMaterialState> states) {
        Set& S = *sets_[it.set];
        kernelRange(S, S.store.begin(it.partition), states);
      });
      tel.computeSeconds = t.compute;
      tel.transferUpSeconds = t.up;
      tel.transferDownSeconds = t.down;
      tel.transferSeconds = t.transfer;
      tel.overlappedSeconds = t.overlapped;
      tel.multispringWallSeconds = t.wall;
      tel.residentHigh = t.residentHigh;
      tel.bytesUp = t.bytesUp;
      tel.bytesDown = t.bytesDown;
      break;
    }
  }
}

StepTelemetry Engine::step(std::span<TimeState* const> states, std::span<const std::span<const double>> fExt) {
  if (states.size() != sets_.size() || fExt.size() != sets_.size())
    throw InputError("engine step needs one state and one force vector per set");
  const double wall0 = nowSeconds();
  StepTelemetry tel;
  tel.strategy = strategyName(opt_.strategy);
  tel.step = states[0]->step + 1;
  arena_->resetPeak();

  for (std::size_t s = 0; s < sets_.size(); ++s) {
    Set& S = *sets_[s];
    LinearOp K = [&](std::span<const double> x, std::span<double> y) { ebe_->stiffness(S.D, x, y); };
    buildRhs(model_.mass, model_.dashpot, K, nm_, S.rayleigh, *states[s], fExt[s], S.rhs);
  }
  solve(states, tel);
  constitutive(tel);

  for (auto& S : sets_) {
    S->hbar = meanDamping(model_, S->h);
    S->rayleigh = updateRayleigh(S->hbar, opt_.rayleighFmin, opt_.rayleighFmax);
    S->scales = OperatorScales::make(nm_, S->rayleigh);
  }
  if (opt_.strategy != StrategyKind::PipelinedBatch2Ebe) {
    const double t0 = nowSeconds();
    updateBlockCrsValues(sets_[0]->A, model_, sets_[0]->D, sets_[0]->scales);
    tel.crsUpdateSeconds = nowSeconds() - t0;
  }
  for (std::size_t s = 0; s < sets_.size(); ++s) {
    Set& S = *sets_[s];
    scatterElementForces(model_, S.dq, S.dqGlobal);
    applyUpdates(*states[s], S.du, S.dqGlobal, nm_);
    for (double v : states[s]->u)
      if (!std::isfinite(v)) throw SolverError("non-finite displacement at step " + std::to_string(tel.step));
  }
  tel.peakFastBytes = arena_->peak();
  tel.stepWallSeconds = nowSeconds() - wall0;
  return tel;
}

}  // namespace tierfem
