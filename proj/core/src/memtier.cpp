#include "tierfem/memtier.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <future>
#include <thread>

#include "tierfem/errors.hpp"

namespace tierfem {

std::string strategyName(StrategyKind k) {
  switch (k) {
    case StrategyKind::SlowOnly: return "SLOW_ONLY";
    case StrategyKind::SolverFast: return "SOLVER_FAST";
    case StrategyKind::Pipelined: return "PIPELINED";
    case StrategyKind::PipelinedBatch2Ebe: return "PIPELINED_BATCH2_EBE";
  }
  return "?";
}

StrategyKind parseStrategy(const std::string& s) {
  if (s == "SLOW_ONLY" || s == "1") return StrategyKind::SlowOnly;
  if (s == "SOLVER_FAST" || s == "2") return StrategyKind::SolverFast;
  if (s == "PIPELINED" || s == "3") return StrategyKind::Pipelined;
  if (s == "PIPELINED_BATCH2_EBE" || s == "4") return StrategyKind::PipelinedBatch2Ebe;
  throw InputError("unknown strategy '" + s + "'");
}

bool isPipelined(StrategyKind k) { return k == StrategyKind::Pipelined || k == StrategyKind::PipelinedBatch2Ebe; }

// ---------------------------------------------------------------- store

PartitionStore::PartitionStore(std::size_t nElements, std::size_t partitionElements)
    : partitionElements_(partitionElements) {
  if (nElements == 0) throw InputError("cannot partition zero elements");
  if (partitionElements == 0) throw InputError("partition size must be at least one element");
  for (std::size_t b = 0; b < nElements; b += partitionElements) begin_.push_back(b);
  begin_.push_back(nElements);
  states_.resize(nElements);
  residency_.assign(partitions(), Residency::Slow);
}

Residency PartitionStore::residency(std::size_t j) const {
  std::lock_guard lk(mu_);
  return residency_.at(j);
}

void PartitionStore::transition(std::size_t j, Residency from, Residency to) {
  std::lock_guard lk(mu_);
  if (residency_.at(j) != from)
    throw TransferError("partition " + std::to_string(j) + " is not in the state required for this transfer");
  residency_[j] = to;
}

PartitionStore partitionStates(std::size_t nElements, std::size_t partitionElements) {
  return PartitionStore(nElements, partitionElements);
}

std::size_t defaultPartitionElements(std::size_t nElements) { return std::max<std::size_t>(1, (nElements + 7) / 8); }

// ---------------------------------------------------------------- arena

FastArena::FastArena(std::size_t capacityBytes) : capacity_(capacityBytes) {}

void FastArena::allocate(const std::string& tag, std::size_t bytes) {
  if (ledger_.count(tag)) throw InputError("fast-arena tag '" + tag + "' allocated twice");
  if (bytes > capacity_ - used_)
    throw CapacityError("fast arena: '" + tag + "' needs " + std::to_string(bytes) + " bytes, " +
                        std::to_string(capacity_ - used_) + " of " + std::to_string(capacity_) + " free");
  ledger_[tag] = bytes;
  used_ += bytes;
  peak_ = std::max(peak_, used_);
}

void FastArena::release(const std::string& tag) {
  auto it = ledger_.find(tag);
  if (it == ledger_.end()) return;
  used_ -= it->second;
  ledger_.erase(it);
}

// ---------------------------------------------------------------- channel

double nowSeconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

void sleepUntil(double t) {
  using namespace std::chrono;
  const auto target = steady_clock::time_point(duration_cast<steady_clock::duration>(duration<double>(t)));
  std::this_thread::sleep_until(target);
}

TransferChannel::TransferChannel(ChannelConfig cfg) : cfg_(cfg) {
  if (!(cfg_.bandwidth > 0)) throw InputError("channel bandwidth must be positive");
  if (cfg_.latency < 0) throw InputError("channel latency must be non-negative");
}

double TransferChannel::duration(std::size_t bytes) const {
  return static_cast<double>(bytes) / cfg_.bandwidth + cfg_.latency;
}

TransferReceipt TransferChannel::charge(Direction d, std::size_t bytes, double start) {
  const double s = duration(bytes);
  (d == Direction::Up ? up_ : down_) += bytes;
  {
    std::lock_guard lk(mu_);
    (d == Direction::Up ? busyUp_ : busyDown_) += s;
  }
  if (cfg_.realtime) sleepUntil(start + s);
  return {bytes, s};
}

double TransferChannel::busy(Direction d) const {
  std::lock_guard lk(mu_);
  return d == Direction::Up ? busyUp_ : busyDown_;
}

void TransferChannel::resetCounters() {
  up_ = 0;
  down_ = 0;
  std::lock_guard lk(mu_);
  busyUp_ = busyDown_ = 0;
}

// ---------------------------------------------------------------- telemetry json

void to_json(nlohmann::json& j, const StepTelemetry& t) {
  j = {{"step", t.step},
       {"strategy", t.strategy},
       {"solver", t.solverSeconds},
       {"solverIterations", t.solverIterations},
       {"compute", t.computeSeconds},
       {"transferUp", t.transferUpSeconds},
       {"transferDown", t.transferDownSeconds},
       {"transfer", t.transferSeconds},
       {"crsUpdate", t.crsUpdateSeconds},
       {"overlapped", t.overlappedSeconds},
       {"multispringWall", t.multispringWallSeconds},
       {"stepWall", t.stepWallSeconds},
       {"peakFastBytes", t.peakFastBytes},
       {"residentHigh", t.residentHigh},
       {"bytesUp", t.bytesUp},
       {"bytesDown", t.bytesDown}};
}

void from_json(const nlohmann::json& j, StepTelemetry& t) {
  t.step = j.at("step").get<int>();
  t.strategy = j.at("strategy").get<std::string>();
  t.solverSeconds = j.at("solver").get<double>();
  t.solverIterations = j.at("solverIterations").get<std::vector<int>>();
  t.computeSeconds = j.at("compute").get<double>();
  t.transferUpSeconds = j.at("transferUp").get<double>();
  t.transferDownSeconds = j.at("transferDown").get<double>();
  t.transferSeconds = j.at("transfer").get<double>();
  t.crsUpdateSeconds = j.at("crsUpdate").get<double>();
  t.overlappedSeconds = j.at("overlapped").get<double>();
  t.multispringWallSeconds = j.at("multispringWall").get<double>();
  t.stepWallSeconds = j.at("stepWall").get<double>();
  t.peakFastBytes = j.at("peakFastBytes").get<std::size_t>();
  t.residentHigh = j.at("residentHigh").get<int>();
  t.bytesUp = j.at("bytesUp").get<std::size_t>();
  t.bytesDown = j.at("bytesDown").get<std::size_t>();
}

// ---------------------------------------------------------------- pipeline

PartitionPipeline::PartitionPipeline(std::vector<PartitionStore*> stores, FastArena& arena,
                                     TransferChannel& channel, PipelineOptions opt)
    : stores_(std::move(stores)), arena_(arena), channel_(channel), opt_(opt) {
  if (stores_.empty()) throw InputError("pipeline needs at least one partition store");
  const std::size_t np = stores_[0]->partitions();
  for (auto* s : stores_)
    if (s->partitions() != np || s->elements() != stores_[0]->elements())
      throw InputError("pipelined sets must share one partitioning");
  for (std::size_t j = 0; j < np; ++j)
    for (std::size_t s = 0; s < stores_.size(); ++s) order_.push_back({s, j});
  slotElements_ = stores_[0]->partitionElements();
  if (!opt_.directSlowAccess) {
    arena_.allocate("partition-slots", 2 * slotElements_ * sizeof(ElementMaterialState));
    for (auto& sl : slots_) sl.buf.resize(slotElements_);
  }
}

PartitionPipeline::~PartitionPipeline() { arena_.release("partition-slots"); }

void PartitionPipeline::noteResidency() {
  const std::size_t r = resident_.load();
  const int parts = static_cast<int>((r + slotElements_ - 1) / slotElements_);
  int prev = residentHigh_.load();
  while (parts > prev && !residentHigh_.compare_exchange_weak(prev, parts)) {
  }
  if (parts > 2) throw CapacityError("more than two constitutive partitions resident in the fast tier");
}

// Copies item into the slot element by element. With waitDrain the slot still
// holds the outgoing item, and element k is written only after it has left.
double PartitionPipeline::upload(std::size_t item, Slot& slot, bool waitDrain) {
  const auto [set, j] = order_[item];
  PartitionStore& st = *stores_[set];
  st.transition(j, Residency::Slow, Residency::InFlightUp);
  auto src = st.states(j);
  for (std::size_t k = 0; k < src.size(); ++k) {
    if (waitDrain && k < slot.outgoing) {
      std::size_t d = slot.drained.load(std::memory_order_acquire);
      while (d <= k) {
        slot.drained.wait(d, std::memory_order_acquire);
        d = slot.drained.load(std::memory_order_acquire);
      }
    }
    std::memcpy(static_cast<void*>(&slot.buf[k]), &src[k], sizeof(ElementMaterialState));
    resident_.fetch_add(1);
    noteResidency();
  }
  st.transition(j, Residency::InFlightUp, Residency::Fast);
  return static_cast<double>(st.partitionBytes(j));
}

double PartitionPipeline::download(std::size_t item, Slot& slot) {
  const auto [set, j] = order_[item];
  PartitionStore& st = *stores_[set];
  st.transition(j, Residency::Fast, Residency::InFlightDown);
  auto dst = st.states(j);
  for (std::size_t k = 0; k < dst.size(); ++k) {
    std::memcpy(static_cast<void*>(&dst[k]), &slot.buf[k], sizeof(ElementMaterialState));
    resident_.fetch_sub(1);
    slot.drained.store(k + 1, std::memory_order_release);
    slot.drained.notify_all();
  }
  st.transition(j, Residency::InFlightDown, Residency::Slow);
  return static_cast<double>(st.partitionBytes(j));
}

double PartitionPipeline::computeItem(std::size_t item, Slot& slot, const PartitionKernel& kernel) {
  const auto [set, j] = order_[item];
  if (stores_[set]->residency(j) != Residency::Fast)
    throw TransferError("partition " + std::to_string(j) + " computed before it reached the fast tier");
  const double t0 = nowSeconds();
  kernel(order_[item], std::span<ElementMaterialState>(slot.buf.data(), stores_[set]->count(j)));
  if (opt_.simulatedCompute >= 0) {
    if (channel_.config().realtime) sleepUntil(t0 + opt_.simulatedCompute);
    return opt_.simulatedCompute;
  }
  return nowSeconds() - t0;
}

PipelineTiming PartitionPipeline::run(const PartitionKernel& kernel) {
  if (opt_.directSlowAccess) return runDirect(kernel);
  PipelineTiming t;
  resident_ = 0;
  residentHigh_ = 0;
  const std::size_t n = order_.size();
  const double wall0 = nowSeconds();
  double virt = 0;
  auto bytesOf = [&](std::size_t i) { return stores_[order_[i].set]->partitionBytes(order_[i].partition); };
  auto slotOf = [&](std::size_t i) -> Slot& { return slots_[i % 2]; };
  for (auto& s : slots_) {
    s.drained = 0;
    s.outgoing = 0;
  }

  // Prologue: the first two items travel up as one message.
  {
    const double start = nowSeconds();
    std::size_t bytes = 0;
    for (std::size_t i = 0; i < std::min<std::size_t>(2, n); ++i) {
      upload(i, slotOf(i), false);
      bytes += bytesOf(i);
    }
    const auto r = channel_.charge(Direction::Up, bytes, start);
    t.up += r.seconds;
    t.transfer += r.seconds;
    t.bytesUp += bytes;
    virt += r.seconds;
  }
  {
    const double c = computeItem(0, slotOf(0), kernel);
    t.compute += c;
    virt += c;
  }
  // Steady state: compute i while i-1 drains from the other slot and i+1 fills it.
  for (std::size_t i = 1; i + 1 < n; ++i) {
    Slot& other = slotOf(i + 1);
    other.drained = 0;
    other.outgoing = stores_[order_[i - 1].set]->count(order_[i - 1].partition);
    auto down = std::async(std::launch::async, [&, i] {
      const double start = nowSeconds();
      download(i - 1, other);
      return channel_.charge(Direction::Down, bytesOf(i - 1), start);
    });
    auto up = std::async(std::launch::async, [&, i] {
      const double start = nowSeconds();
      upload(i + 1, other, true);
      return channel_.charge(Direction::Up, bytesOf(i + 1), start);
    });
    double c = 0;
    std::exception_ptr err;
    try {
      c = computeItem(i, slotOf(i), kernel);
    } catch (...) {
      err = std::current_exception();
    }
    TransferReceipt rd, ru;
    try {
      rd = down.get();
    } catch (...) {
      if (!err) err = std::current_exception();
    }
    try {
      ru = up.get();
    } catch (...) {
      if (!err) err = std::current_exception();
    }
    if (err) std::rethrow_exception(err);
    t.compute += c;
    t.down += rd.seconds;
    t.up += ru.seconds;
    t.bytesDown += rd.bytes;
    t.bytesUp += ru.bytes;
    t.transfer += std::max(rd.seconds, ru.seconds);
    virt += std::max({c, rd.seconds, ru.seconds});
  }
  if (n >= 2) {
    const double c = computeItem(n - 1, slotOf(n - 1), kernel);
    t.compute += c;
    virt += c;
  }
  // Epilogue: the last two items travel down as one message.
  {
    const double start = nowSeconds();
    std::size_t bytes = 0;
    for (std::size_t i = n >= 2 ? n - 2 : 0; i < n; ++i) {
      download(i, slotOf(i));
      bytes += bytesOf(i);
    }
    const auto r = channel_.charge(Direction::Down, bytes, start);
    t.down += r.seconds;
    t.transfer += r.seconds;
    t.bytesDown += bytes;
    virt += r.seconds;
  }
  t.wall = channel_.config().realtime ? nowSeconds() - wall0 : virt;
  t.overlapped = std::clamp(t.compute + t.transfer - t.wall, 0.0, std::min(t.compute, t.transfer));
  t.residentHigh = residentHigh_.load();
  return t;
}

PipelineTiming PartitionPipeline::runDirect(const PartitionKernel& kernel) {
  PipelineTiming t;
  const double wall0 = nowSeconds();
  double virt = 0;
  for (const auto& it : order_) {
    PartitionStore& st = *stores_[it.set];
    const double t0 = nowSeconds();
    kernel(it, st.states(it.partition));
    double c = opt_.simulatedCompute >= 0 ? opt_.simulatedCompute : nowSeconds() - t0;
    // Every element state is read and written across the slow link.
    c += 2.0 * static_cast<double>(st.count(it.partition)) * opt_.directAccessLatency;
    if (channel_.config().realtime) sleepUntil(t0 + c);
    t.compute += c;
    virt += c;
  }
  t.wall = channel_.config().realtime ? nowSeconds() - wall0 : virt;
  return t;
}

}  // namespace tierfem
