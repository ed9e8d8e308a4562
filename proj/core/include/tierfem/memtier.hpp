#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "constitutive.hpp"
#include "json.hpp"

namespace tierfem {

enum class StrategyKind { SlowOnly, SolverFast, Pipelined, PipelinedBatch2Ebe };

std::string strategyName(StrategyKind k);
/// Accepts the enum names (SLOW_ONLY, ...) and the numbers 1-4.
StrategyKind parseStrategy(const std::string& s);
bool isPipelined(StrategyKind k);

enum class Residency { Slow, Fast, InFlightUp, InFlightDown };

/// Slow-tier home of one set's constitutive state, split into contiguous partitions.
class PartitionStore {
 public:
  PartitionStore(std::size_t nElements, std::size_t partitionElements);

  std::size_t partitions() const { return begin_.size() - 1; }
  std::size_t elements() const { return states_.size(); }
  std::size_t partitionElements() const { return partitionElements_; }
  std::size_t begin(std::size_t j) const { return begin_[j]; }
  std::size_t end(std::size_t j) const { return begin_[j + 1]; }
  std::size_t count(std::size_t j) const { return end(j) - begin(j); }
  std::size_t partitionBytes(std::size_t j) const { return count(j) * sizeof(ElementMaterialState); }

  std::span<ElementMaterialState> states() { return states_; }
  std::span<const ElementMaterialState> states() const { return states_; }
  std::span<ElementMaterialState> states(std::size_t j) {
    return std::span<ElementMaterialState>(states_).subspan(begin(j), count(j));
  }

  Residency residency(std::size_t j) const;
  /// Moves partition j between residency states; throws TransferError on an illegal move.
  void transition(std::size_t j, Residency from, Residency to);

 private:
  std::size_t partitionElements_;
  std::vector<std::size_t> begin_;
  std::vector<ElementMaterialState> states_;
  mutable std::mutex mu_;
  std::vector<Residency> residency_;
};

/// Contiguous ranges of at most partitionElements; throws InputError for empty input.
PartitionStore partitionStates(std::size_t nElements, std::size_t partitionElements);
/// ceil(n/8), at least 1.
std::size_t defaultPartitionElements(std::size_t nElements);

/// Capacity-bounded fast tier. Only the partition slots hold real buffers; the
/// other allocations are accounting entries for data the solver keeps there.
class FastArena {
 public:
  explicit FastArena(std::size_t capacityBytes);

  /// Throws CapacityError if the allocation does not fit.
  void allocate(const std::string& tag, std::size_t bytes);
  void release(const std::string& tag);
  std::size_t used() const { return used_; }
  std::size_t peak() const { return peak_; }
  std::size_t capacity() const { return capacity_; }
  void resetPeak() { peak_ = used_; }
  const std::map<std::string, std::size_t>& ledger() const { return ledger_; }

 private:
  std::size_t capacity_;
  std::size_t used_ = 0;
  std::size_t peak_ = 0;
  std::map<std::string, std::size_t> ledger_;
};

struct ChannelConfig {
  double bandwidth = 4.5e11;  // bytes/s per direction
  double latency = 0.0;       // s per message
  bool realtime = false;      // sleep until the simulated duration elapses
};

enum class Direction { Up, Down };

struct TransferReceipt {
  std::size_t bytes = 0;
  double seconds = 0.0;
};

/// Full-duplex link; each direction accounts its own bytes and busy time.
class TransferChannel {
 public:
  explicit TransferChannel(ChannelConfig cfg = {});
  double duration(std::size_t bytes) const;
  /// Charges one message. In realtime mode the call returns no earlier than
  /// `start` plus the simulated duration.
  TransferReceipt charge(Direction d, std::size_t bytes, double start);
  const ChannelConfig& config() const { return cfg_; }
  std::size_t bytes(Direction d) const { return d == Direction::Up ? up_.load() : down_.load(); }
  double busy(Direction d) const;
  void resetCounters();

 private:
  ChannelConfig cfg_;
  std::atomic<std::size_t> up_{0}, down_{0};
  mutable std::mutex mu_;
  double busyUp_ = 0, busyDown_ = 0;
};

/// Seconds on a monotonic clock.
double nowSeconds();
void sleepUntil(double t);

struct StepTelemetry {
  int step = 0;
  std::string strategy;
  double solverSeconds = 0;
  std::vector<int> solverIterations;
  double computeSeconds = 0;         // constitutive compute, summed over partitions
  double transferUpSeconds = 0;
  double transferDownSeconds = 0;
  double transferSeconds = 0;        // channel busy time, up and down overlapped
  double crsUpdateSeconds = 0;
  double overlappedSeconds = 0;      // compute hidden behind transfer (or vice versa)
  double multispringWallSeconds = 0;
  double stepWallSeconds = 0;
  std::size_t peakFastBytes = 0;
  int residentHigh = 0;              // fast-resident partition high-watermark
  std::size_t bytesUp = 0;
  std::size_t bytesDown = 0;
};

void to_json(nlohmann::json& j, const StepTelemetry& t);
void from_json(const nlohmann::json& j, StepTelemetry& t);

struct PipelineOptions {
  /// Per-partition compute time charged instead of the measured one (< 0: measured).
  double simulatedCompute = -1.0;
  /// Diagnostic: compute straight from the slow store, paying this per element access.
  bool directSlowAccess = false;
  double directAccessLatency = 0.0;
};

/// Which set and partition one pipeline item refers to.
struct PipelineItem {
  std::size_t set;
  std::size_t partition;
};

struct PipelineTiming {
  double compute = 0;
  double up = 0, down = 0;
  double transfer = 0;  // sum over phases of the busier direction
  double wall = 0;
  double overlapped = 0;
  int residentHigh = 0;
  std::size_t bytesUp = 0, bytesDown = 0;
};

using PartitionKernel = std::function<void(const PipelineItem&, std::span<ElementMaterialState>)>;

/// Double-buffered pipeline: partition j is computed in one fast slot while
/// j-1 leaves and j+1 arrives through the other, element by element, so the
/// two slots are the only constitutive storage in the fast tier.
class PartitionPipeline {
 public:
  /// Allocates the two slots in the arena (CapacityError if they do not fit).
  PartitionPipeline(std::vector<PartitionStore*> stores, FastArena& arena, TransferChannel& channel,
                    PipelineOptions opt = {});
  ~PartitionPipeline();
  PartitionPipeline(const PartitionPipeline&) = delete;
  PartitionPipeline& operator=(const PartitionPipeline&) = delete;

  /// Runs every item through the slots in order: sets interleaved per partition.
  PipelineTiming run(const PartitionKernel& kernel);
  /// Fast-tier compute reading the slow store directly (diagnostic).
  PipelineTiming runDirect(const PartitionKernel& kernel);

  std::size_t items() const { return order_.size(); }
  std::size_t slotElements() const { return slotElements_; }
  /// Elements of constitutive state currently in the slots.
  std::size_t residentElements() const { return resident_.load(); }

 private:
  struct Slot {
    std::vector<ElementMaterialState> buf;
    std::atomic<std::size_t> drained{0};  // elements of the outgoing item already written back
    std::size_t outgoing = 0;             // element count of the item being drained
  };
  double upload(std::size_t item, Slot& slot, bool waitDrain);
  double download(std::size_t item, Slot& slot);
  double computeItem(std::size_t item, Slot& slot, const PartitionKernel& kernel);
  void noteResidency();

  std::vector<PartitionStore*> stores_;
  FastArena& arena_;
  TransferChannel& channel_;
  PipelineOptions opt_;
  std::vector<PipelineItem> order_;
  std::size_t slotElements_ = 0;
  Slot slots_[2];
  std::atomic<std::size_t> resident_{0};
  std::atomic<int> residentHigh_{0};
};

}  // namespace tierfem
